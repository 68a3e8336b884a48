#![no_main]
use causal_prompt::harness::parse_benchmark;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((samples, report)) = parse_benchmark(text) {
        assert_eq!(samples.len(), report.total);
        for sample in &samples {
            assert!(sample.context_length > 0);
            assert!(!sample.reference_kg.is_empty());
        }
    }
});
