use std::path::Path;
use std::process::{Command, Output};

fn ergokit(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ergokit"));
    cmd.args(args).env_remove("ERGOKIT_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn entries(dir: &Path) -> usize {
    std::fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}

#[test]
fn list_has_catalog() {
    let out = ergokit(&["list"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 12);
    for id in ["theoremC-pliss-block", "prop7-zeta-entropy"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id}");
    }
}

#[test]
fn example_prints_runnable_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ergokit(&["example", "example-2-1", "--seed", "4"], &[]);
    assert!(out.status.success());
    let cfg = write(tmp.path(), "c.toml", &String::from_utf8(out.stdout).unwrap());
    let outdir = tmp.path().join("out");
    let run = ergokit(&["run", &cfg, "--out", outdir.to_str().unwrap()], &[]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(outdir.join("example-2-1.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("experiment,quantity,value,error,meta,verdict"));
    let quantities: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    let mut sorted = quantities.clone();
    sorted.sort();
    assert_eq!(quantities, sorted);
    assert!(quantities.contains(&"spreading_is_123"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("example-2-1.json")).unwrap()).unwrap();
    assert_eq!(json["all_pass"], true);
    assert_eq!(ergokit(&["example", "nope"], &[]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let outdir = tmp.path().join("out");
    let o = outdir.to_str().unwrap();
    for (i, bad) in [
        "schema_version = 1\nexperiment = \"example-2-1\"\n",
        "schema_version = 1\nexperiment = \"example-2-1\"\nseed = 1\nextra = true\n",
        "schema_version = 1\nexperiment = \"kac-doubling\"\nseed = 1\n[params]\nsamples = 0\n",
        "schema_version = 1\nexperiment = \"example-2-1\"\nseed = 1\n[params]\nsamples = 10\n",
        "schema_version = 1\nexperiment = \"unknown\"\nseed = 1\n",
        "this is not toml = = =",
        "schema_version = 1\nexperiment = \"example-2-1\"\nseed = 1\n[tolerances]\nmissing = 0.1\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(tmp.path(), &format!("bad{i}.toml"), bad);
        let out = ergokit(&["run", &cfg, "--out", o], &[]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
        assert_eq!(entries(&outdir), 0, "{bad}");
    }
    let out = ergokit(&["run", tmp.path().join("absent.toml").to_str().unwrap(), "--out", o], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tolerance_failure_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "schema_version = 1\nexperiment = \"kac-bernoulli\"\nseed = 3\n[params]\nsamples = 1000\n[tolerances]\nkac_integral = 0.0\n",
    );
    let outdir = tmp.path().join("out");
    let out = ergokit(&["run", &cfg, "--out", outdir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(outdir.join("kac-bernoulli.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains(",kac_integral,") && l.ends_with(",FAIL")));
}

#[test]
fn runtime_error_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "schema_version = 1\nexperiment = \"prop7-zeta-entropy\"\nseed = 3\n[params]\nalpha = 1.5\n",
    );
    let outdir = tmp.path().join("out");
    let out = ergokit(&["run", &cfg, "--out", outdir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(entries(&outdir), 0);
}

#[test]
fn output_independent_of_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "schema_version = 1\nexperiment = \"block-kac\"\nseed = 21\n[params]\nsamples = 3000\ndepth = 500\nhorizon = 500\n[tolerances]\nkac_block_integral = 1.0\n",
    );
    let mut outputs = Vec::new();
    for (k, (flag, env)) in [(Some("1"), None), (None, Some("3")), (Some("2"), Some("1"))].into_iter().enumerate() {
        let dir = tmp.path().join(format!("o{k}"));
        let mut args = vec!["run", cfg.as_str(), "--out", dir.to_str().unwrap()];
        if let Some(t) = flag {
            args.extend(["--threads", t]);
        }
        let envs: Vec<(&str, &str)> = env.map(|e| vec![("ERGOKIT_THREADS", e)]).unwrap_or_default();
        let out = ergokit(&args, &envs);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((
            std::fs::read(dir.join("block-kac.csv")).unwrap(),
            std::fs::read(dir.join("block-kac.json")).unwrap(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_thread_count_is_usage_error() {
    let out = ergokit(&["run", "x.toml", "--threads", "0"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
