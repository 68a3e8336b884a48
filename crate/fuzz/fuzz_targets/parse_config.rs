#![no_main]
use causal_prompt::backend::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text) {
        assert!(config.temperature >= 0.0);
        assert!(config.max_tokens >= 1);
    }
});
