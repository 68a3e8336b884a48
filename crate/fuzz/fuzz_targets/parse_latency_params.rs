#![no_main]
use causal_prompt::schedule::{parse_latency_params, predict_latency, ScheduleMode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(params) = parse_latency_params(text) {
        // Accepted parameters must produce finite, non-negative latencies.
        for mode in [ScheduleMode::Sequential, ScheduleMode::Proactive] {
            let latency = predict_latency(&params, mode);
            assert!(latency.is_finite() && latency >= 0.0);
        }
    }
});
