#![no_main]
use ergokit::markov::{invariant_stats, MassDistribution, MassSpec};
use libfuzzer_sys::fuzz_target;

// JSON or TOML, as it appears under params.mass
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let spec = serde_json::from_str::<MassSpec>(s).ok().or_else(|| toml::from_str::<MassSpec>(s).ok());
    if let Some(m) = spec.and_then(|spec| MassDistribution::new(spec).ok()) {
        let st = invariant_stats(&m);
        assert!(!st.mean_return.is_nan());
    }
});
