#![no_main]
use ergokit::schedule::EventSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(set) = EventSet::from_json(s) {
        let _ = set.densities();
        assert_eq!(EventSet::from_json(&set.to_json()).unwrap(), set);
    }
});
