#![no_main]
use causal_prompt::claims::{extract_causal_relations, ClaimExtractor};
use causal_prompt::graph::RelationKind;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let extractor = ClaimExtractor::default();
    let claims = extractor.segment_claims(text);
    // Deterministic.
    assert_eq!(claims, extractor.segment_claims(text));
    // Span and ordering invariants.
    let mut previous_start = 0;
    for claim in &claims.claims {
        let (start, end) = claim.source_span;
        assert!(start < end && end <= text.len());
        // Slicing checks char-boundary validity; the sentence must carry
        // the relation surface text.
        assert!(text[start..end].contains(&claim.relation));
        assert!(!claim.subject.is_empty() && !claim.object.is_empty());
        assert!(start >= previous_start, "claims out of source order");
        previous_start = start;
    }
    let causal = extract_causal_relations(&claims);
    let expected = claims
        .claims
        .iter()
        .filter(|c| c.relation_kind == RelationKind::Causal)
        .count();
    assert_eq!(causal.len(), expected);
});
