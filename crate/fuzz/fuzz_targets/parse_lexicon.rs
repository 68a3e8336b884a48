#![no_main]
use causal_prompt::claims::{CausalLexicon, ClaimExtractor};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(lexicon) = CausalLexicon::parse(text) {
        // Any accepted lexicon must be usable for extraction.
        let extractor = ClaimExtractor::new(lexicon);
        let _ = extractor.segment_claims("Heavy rainfall causes flooding.");
    }
});
