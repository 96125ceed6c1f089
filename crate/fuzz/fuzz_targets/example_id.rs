#![no_main]
use ergokit::systems::{worked_example, ExampleId};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(id) = ExampleId::parse(s) {
        let _ = worked_example(id);
    }
});
