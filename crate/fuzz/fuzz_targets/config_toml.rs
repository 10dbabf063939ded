#![no_main]

use d2dsched::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ExperimentConfig::from_toml_str(text, &[]) else { return };
    let snapshot = config.to_toml_string().expect("valid config serialises");
    let again = ExperimentConfig::from_toml_str(&snapshot, &[]).expect("snapshot parses");
    assert_eq!(again, config);
});
