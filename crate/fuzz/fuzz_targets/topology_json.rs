#![no_main]

use d2dsched::topology::NetworkTopology;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(topo) = NetworkTopology::from_json_str(text) else { return };
    let json = topo.to_json().expect("valid topology serialises");
    assert_eq!(NetworkTopology::from_json_str(&json).expect("round trip"), topo);
});
