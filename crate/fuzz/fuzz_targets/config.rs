#![no_main]

use hincrec::config::{parse_synth_config, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        cfg.validate().expect("parsed configs are valid");
    }
    if let Ok(cfg) = parse_synth_config(text) {
        cfg.validate().expect("parsed configs are valid");
    }
});
