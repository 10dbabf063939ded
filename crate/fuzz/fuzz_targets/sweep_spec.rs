#![no_main]

use d2dsched::config::SweepSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<SweepSpec>() {
        assert_eq!(spec.overrides().len(), spec.values.len());
    }
});
