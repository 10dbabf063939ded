#![no_main]

use d2dsched::config::Override;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(o) = text.parse::<Override>() else { return };
    let again: Override = o.to_string().parse().expect("displayed override parses");
    assert_eq!(again.path, o.path);
});
