//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, so the seeds stay meaningful on a stable toolchain.

use std::path::PathBuf;

use ergokit::config::ExperimentConfig;
use ergokit::experiments;
use ergokit::markov::{invariant_stats, MassDistribution, MassSpec};
use ergokit::schedule::EventSet;
use ergokit::systems::{worked_example, ExampleId};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

// Each body mirrors fuzz/fuzz_targets/<target>.rs and reports whether the input was accepted.

fn config_parse(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    match ExperimentConfig::parse(s) {
        Ok(cfg) => {
            let _ = experiments::check_config(&cfg);
            assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
            true
        }
        Err(_) => false,
    }
}

fn event_set_json(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    match EventSet::from_json(s) {
        Ok(set) => {
            let _ = set.densities();
            assert_eq!(EventSet::from_json(&set.to_json()).unwrap(), set);
            true
        }
        Err(_) => false,
    }
}

fn mass_spec(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    let spec = serde_json::from_str::<MassSpec>(s).ok().or_else(|| toml::from_str::<MassSpec>(s).ok());
    match spec.and_then(|spec| MassDistribution::new(spec).ok()) {
        Some(m) => {
            assert!(!invariant_stats(&m).mean_return.is_nan());
            true
        }
        None => false,
    }
}

fn example_id(data: &[u8]) -> bool {
    let Ok(s) = std::str::from_utf8(data) else { return false };
    match ExampleId::parse(s) {
        Ok(id) => {
            let _ = worked_example(id);
            true
        }
        Err(_) => false,
    }
}

fn replay(target: &str, body: fn(&[u8]) -> bool, rejected: &[&str]) {
    for (name, data) in seeds(target) {
        let accepted = body(&data);
        assert_eq!(accepted, !rejected.contains(&name.as_str()), "{target}/{name}");
        // truncations and byte flips must not panic
        for cut in (0..data.len()).step_by(7) {
            body(&data[..cut]);
        }
        let mut flipped = data.clone();
        for i in (0..flipped.len()).step_by(5) {
            flipped[i] ^= 0x20;
            body(&flipped);
        }
    }
}

#[test]
fn config_seeds() {
    replay(
        "config_parse",
        config_parse,
        &["unknown_field.toml", "bad_schema.toml", "missing_seed.toml", "nan_param.toml"],
    );
}

#[test]
fn catalog_seeds_pass_config_check() {
    for (name, data) in seeds("config_parse") {
        if let Ok(cfg) = ExperimentConfig::parse(std::str::from_utf8(&data).unwrap()) {
            let known = experiments::lookup(&cfg.experiment).is_some();
            assert_eq!(experiments::check_config(&cfg).is_ok(), known, "{name}");
        }
    }
}

#[test]
fn event_set_seeds() {
    replay("event_set_json", event_set_json, &["unsorted.json", "out_of_range.json", "zero_index.json"]);
}

#[test]
fn mass_spec_seeds() {
    replay("mass_spec", mass_spec, &["bad_zeta.json"]);
}

#[test]
fn example_id_seeds() {
    replay("example_id", example_id, &["ex9_9"]);
}
