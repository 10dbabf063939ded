#![no_main]

use d2dsched::trace::{read_trace_str, trace_to_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(rows) = read_trace_str(text) else { return };
    let written = trace_to_string(&rows).expect("parsed rows serialise");
    let again = read_trace_str(&written).expect("written trace parses");
    assert_eq!(again.len(), rows.len());
});
