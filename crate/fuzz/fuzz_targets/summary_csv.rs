#![no_main]

use d2dsched::trace::{read_records, AggregateRow, RunSummary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_records::<_, RunSummary>(data, "summary");
    let _ = read_records::<_, AggregateRow>(data, "aggregate");
});
