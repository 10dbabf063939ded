#![no_main]

use d2dsched::action::SchedulingAction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(a) = text.parse::<SchedulingAction>() else { return };
    assert_eq!(a.to_string().parse::<SchedulingAction>().expect("round trip"), a);
});
