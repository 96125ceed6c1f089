#![no_main]
use ergokit::config::ExperimentConfig;
use ergokit::experiments;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(s) {
        let _ = experiments::check_config(&cfg);
        let again = ExperimentConfig::parse(&cfg.to_toml()).expect("emitted config parses");
        assert_eq!(again, cfg);
    }
});
