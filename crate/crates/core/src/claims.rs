//! Rule-based claim extraction: segment generated text into atomic
//! subject/relation/object claims and classify each into the causal /
//! attribute / factual taxonomy.
//!
//! The extractor is deterministic by design so metric runs are
//! reproducible. Sentences split on `.!?` (single-letter initials and a
//! small abbreviation list are kept intact); each sentence yields at most
//! one clause-level claim. Pattern precedence is causal > attribute >
//! factual: a sentence matching a causal connective is never classified
//! as anything else.
//!
//! Connectives that state the cause on their right-hand side ("because",
//! "due to") are marked `reverse` in the lexicon; the extractor stores the
//! claim in causal direction, so `subject -> object` always reads
//! cause -> effect.

use thiserror::Error;

use crate::graph::{CausalGraph, GraphError, NodeKind, RelationKind};
use crate::text::normalize_label;

/// Default strength recorded on edges built from extracted claims; the
/// rule-based extractor has no confidence model.
pub const EXTRACTED_EDGE_STRENGTH: f64 = 0.9;

/// Built-in causal-connective lexicon, one pattern per line. A pattern may
/// carry a tab-separated `reverse` directive when its cause appears on the
/// right-hand side.
pub const DEFAULT_LEXICON: &str = "\
causes
leads to
results in
because\treverse
due to\treverse
therefore
";

const ATTRIBUTE_MARKERS: [&str; 8] = [
    "has property",
    "is",
    "are",
    "was",
    "were",
    "has",
    "have",
    "had",
];

const ABBREVIATIONS: [&str; 10] = [
    "dr", "mr", "mrs", "ms", "vs", "etc", "fig", "no", "al", "st",
];

const FUNCTION_WORDS: [&str; 12] = [
    "and", "or", "the", "a", "an", "of", "to", "in", "on", "at", "very", "so",
];

#[derive(Debug, Error)]
pub enum ClaimError {
    #[error("bad lexicon line {line}: {reason}")]
    BadLexicon { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    /// Normalized cause/left-hand entity text.
    pub subject: String,
    /// Surface relation text as written.
    pub relation: String,
    /// Normalized effect/right-hand entity text.
    pub object: String,
    pub relation_kind: RelationKind,
    /// Byte interval of the originating sentence in the input text.
    pub source_span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClaimSet {
    /// Claims in source-span order.
    pub claims: Vec<Claim>,
    /// Whitespace-delimited token count of the source text (not model
    /// tokens), used as the information-density denominator.
    pub source_token_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct LexiconPattern {
    tokens: Vec<String>,
    reversed: bool,
}

/// Causal-connective lexicon; loadable from a plain-text config file.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalLexicon {
    patterns: Vec<LexiconPattern>,
}

impl Default for CausalLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("built-in lexicon is valid")
    }
}

impl CausalLexicon {
    pub fn parse(text: &str) -> Result<Self, ClaimError> {
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, directive) = match line.split_once('\t') {
                Some((p, d)) => (p.trim(), Some(d.trim())),
                None => (line, None),
            };
            let reversed = match directive {
                None | Some("") | Some("forward") => false,
                Some("reverse") => true,
                Some(other) => {
                    return Err(ClaimError::BadLexicon {
                        line: i + 1,
                        reason: format!("unknown directive `{other}`"),
                    })
                }
            };
            let tokens: Vec<String> = pattern
                .split_whitespace()
                .map(|t| t.to_lowercase())
                .collect();
            if tokens.is_empty() {
                return Err(ClaimError::BadLexicon {
                    line: i + 1,
                    reason: "empty pattern".to_string(),
                });
            }
            patterns.push(LexiconPattern { tokens, reversed });
        }
        // Longest patterns first so "results in" wins over a bare "results".
        patterns.sort_by_key(|p| std::cmp::Reverse(p.tokens.len()));
        Ok(Self { patterns })
    }

    fn match_at(&self, tokens: &[TokenView<'_>], i: usize) -> Option<&LexiconPattern> {
        self.patterns.iter().find(|p| {
            tokens.len() - i >= p.tokens.len()
                && p.tokens
                    .iter()
                    .zip(&tokens[i..])
                    .all(|(pat, tok)| pat == &tok.core)
        })
    }
}

/// Deterministic rule-based extractor; stateless apart from its lexicon.
#[derive(Debug, Clone, Default)]
pub struct ClaimExtractor {
    pub lexicon: CausalLexicon,
}

struct TokenView<'a> {
    /// Lowercased token with boundary punctuation stripped.
    core: String,
    raw: &'a str,
    start: usize,
}

impl ClaimExtractor {
    pub fn new(lexicon: CausalLexicon) -> Self {
        Self { lexicon }
    }

    /// Segment text into claims. Deterministic and pure: identical input
    /// yields an identical `ClaimSet`. Sentences with no extractable
    /// structure yield no claims.
    pub fn segment_claims(&self, text: &str) -> ClaimSet {
        let mut claims = Vec::new();
        for (start, end) in split_sentences(text) {
            if let Some(claim) = self.extract_clause(&text[start..end], (start, end)) {
                claims.push(claim);
            }
        }
        ClaimSet {
            claims,
            source_token_count: text.split_whitespace().count(),
        }
    }

    /// Classify a claim's relation surface text: causal if it matches the
    /// connective lexicon, attribute on copular/possessive markers,
    /// factual otherwise. Precedence causal > attribute > factual.
    pub fn classify_relation(&self, claim: &Claim) -> RelationKind {
        let tokens = tokenize(&claim.relation);
        for i in 0..tokens.len() {
            if self.lexicon.match_at(&tokens, i).is_some() {
                return RelationKind::Causal;
            }
        }
        for i in 0..tokens.len() {
            if attribute_match_len(&tokens, i).is_some() {
                return RelationKind::Attribute;
            }
        }
        RelationKind::Factual
    }

    fn extract_clause(&self, sentence: &str, span: (usize, usize)) -> Option<Claim> {
        let tokens = tokenize(sentence);
        if tokens.len() < 3 {
            return None;
        }

        // Causal connectives first.
        for i in 1..tokens.len() - 1 {
            if let Some(pattern) = self.lexicon.match_at(&tokens, i) {
                let relation = surface_text(sentence, &tokens, i, pattern.tokens.len());
                let left = fragment(sentence, &tokens, 0, i);
                let right = fragment(sentence, &tokens, i + pattern.tokens.len(), tokens.len());
                let (subject, object) = if pattern.reversed {
                    (right, left)
                } else {
                    (left, right)
                };
                if subject.is_empty() || object.is_empty() {
                    return None;
                }
                return Some(Claim {
                    subject,
                    relation,
                    object,
                    relation_kind: RelationKind::Causal,
                    source_span: span,
                });
            }
        }

        // Copular / possessive attribute patterns.
        for i in 1..tokens.len() - 1 {
            if let Some(len) = attribute_match_len(&tokens, i) {
                let relation = surface_text(sentence, &tokens, i, len);
                let subject = fragment(sentence, &tokens, 0, i);
                let object = fragment(sentence, &tokens, i + len, tokens.len());
                if subject.is_empty() || object.is_empty() {
                    return None;
                }
                return Some(Claim {
                    subject,
                    relation,
                    object,
                    relation_kind: RelationKind::Attribute,
                    source_span: span,
                });
            }
        }

        // Factual fallback: capitalized subject run, short lowercase verb
        // phrase, non-empty object remainder.
        let first_lower = tokens
            .iter()
            .position(|t| t.raw.chars().next().is_some_and(|c| c.is_lowercase()))?;
        if first_lower == 0 || first_lower >= tokens.len() - 1 {
            return None;
        }
        let mut rel_end = first_lower;
        while rel_end < tokens.len() - 1
            && rel_end - first_lower < 3
            && tokens[rel_end]
                .raw
                .chars()
                .next()
                .is_some_and(|c| c.is_lowercase())
        {
            rel_end += 1;
        }
        if rel_end >= tokens.len() {
            return None;
        }
        // A relation made only of function words is not a predicate.
        if tokens[first_lower..rel_end]
            .iter()
            .all(|t| FUNCTION_WORDS.contains(&t.core.as_str()))
        {
            return None;
        }
        let subject = fragment(sentence, &tokens, 0, first_lower);
        let relation = surface_text(sentence, &tokens, first_lower, rel_end - first_lower);
        let object = fragment(sentence, &tokens, rel_end, tokens.len());
        if subject.is_empty() || object.is_empty() {
            return None;
        }
        Some(Claim {
            subject,
            relation,
            object,
            relation_kind: RelationKind::Factual,
            source_span: span,
        })
    }
}

/// Directed cause -> effect pairs of the causal claims, order and
/// duplicates preserved (deduplication happens at graph construction).
pub fn extract_causal_relations(claims: &ClaimSet) -> Vec<(String, String)> {
    claims
        .claims
        .iter()
        .filter(|c| c.relation_kind == RelationKind::Causal)
        .map(|c| (c.subject.clone(), c.object.clone()))
        .collect()
}

/// Build a causal graph from an extracted claim set: one node per distinct
/// subject/object, one typed edge per claim.
pub fn to_causal_graph(claims: &ClaimSet) -> Result<CausalGraph, GraphError> {
    let mut g = CausalGraph::new();
    for c in &claims.claims {
        g.insert_node(&c.subject, NodeKind::Entity)?;
        g.insert_node(&c.object, NodeKind::Entity)?;
        g.add_edge(&c.subject, &c.object, EXTRACTED_EDGE_STRENGTH, c.relation_kind)?;
    }
    Ok(g)
}

fn attribute_match_len(tokens: &[TokenView<'_>], i: usize) -> Option<usize> {
    for marker in ATTRIBUTE_MARKERS {
        let parts: Vec<&str> = marker.split(' ').collect();
        if tokens.len() - i >= parts.len()
            && parts
                .iter()
                .zip(&tokens[i..])
                .all(|(p, t)| *p == t.core)
        {
            return Some(parts.len());
        }
    }
    None
}

fn tokenize(text: &str) -> Vec<TokenView<'_>> {
    let mut out = Vec::new();
    for (start, raw) in split_with_offsets(text) {
        let core: String = raw
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        out.push(TokenView { core, raw, start });
    }
    out
}

fn split_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for chunk in text.split_whitespace() {
        let found = text[offset..].find(chunk).expect("chunk comes from text") + offset;
        out.push((found, chunk));
        offset = found + chunk.len();
    }
    out
}

fn fragment(sentence: &str, tokens: &[TokenView<'_>], from: usize, to: usize) -> String {
    if from >= to {
        return String::new();
    }
    let start = tokens[from].start;
    let end = tokens[to - 1].start + tokens[to - 1].raw.len();
    let raw = sentence[start..end]
        .trim_matches(|c: char| c.is_whitespace() || ",.;:!?".contains(c));
    normalize_label(raw)
}

fn surface_text(sentence: &str, tokens: &[TokenView<'_>], from: usize, len: usize) -> String {
    let start = tokens[from].start;
    let last = &tokens[from + len - 1];
    sentence[start..last.start + last.raw.len()]
        .trim_end_matches(|c: char| ",.;:!?".contains(c))
        .to_string()
}

/// Sentence spans split on `.!?`. A terminator must be followed by
/// whitespace or end of text; a period directly after a single letter
/// (an initial like "J.") or a known abbreviation does not split.
fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '!' || c == '?' || (c == '.' && !is_non_breaking_period(text, start, i)) {
            let followed_by_ws = i + 1 >= bytes.len() || (bytes[i + 1] as char).is_whitespace();
            if followed_by_ws {
                push_span(text, start, i + 1, &mut spans);
                start = i + 1;
            }
        }
        i += 1;
    }
    push_span(text, start, bytes.len(), &mut spans);
    spans
}

fn is_non_breaking_period(text: &str, sentence_start: usize, dot: usize) -> bool {
    // Word immediately preceding the dot, measured back to whitespace or
    // a previous dot.
    let prefix = &text[sentence_start..dot];
    let word = prefix
        .rsplit(|c: char| c.is_whitespace() || c == '.')
        .next()
        .unwrap_or("");
    if word.chars().count() == 1 && word.chars().all(|c| c.is_alphabetic()) {
        return true; // initial, as in "J.K."
    }
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

fn push_span(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let trimmed_front = slice.len() - slice.trim_start().len();
    let trimmed_back = slice.len() - slice.trim_end().len();
    let (s, e) = (start + trimmed_front, end - trimmed_back);
    if s < e {
        spans.push((s, e));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extractor() -> ClaimExtractor {
        ClaimExtractor::default()
    }

    #[test]
    fn causal_sentence_yields_one_claim() {
        let cs = extractor().segment_claims("Heavy rainfall causes flooding.");
        assert_eq!(cs.claims.len(), 1);
        let c = &cs.claims[0];
        assert_eq!(c.subject, "heavy rainfall");
        assert_eq!(c.relation, "causes");
        assert_eq!(c.object, "flooding");
        assert_eq!(c.relation_kind, RelationKind::Causal);
        assert_eq!(cs.source_token_count, 4);
    }

    #[test]
    fn empty_text_yields_empty_claim_set() {
        let cs = extractor().segment_claims("");
        assert!(cs.claims.is_empty());
        assert_eq!(cs.source_token_count, 0);
    }

    #[test]
    fn sentences_with_initials_split_correctly() {
        let cs = extractor().segment_claims("Alice is a doctor. J.K. Rowling wrote Harry Potter.");
        assert_eq!(cs.claims.len(), 2);
        assert_eq!(cs.claims[0].subject, "alice");
        assert_eq!(cs.claims[0].relation_kind, RelationKind::Attribute);
        assert_eq!(cs.claims[1].subject, "j.k. rowling");
        assert_eq!(cs.claims[1].relation, "wrote");
        assert_eq!(cs.claims[1].object, "harry potter");
        assert_eq!(cs.claims[1].relation_kind, RelationKind::Factual);
    }

    #[test]
    fn classification_follows_taxonomy() {
        let ex = extractor();
        let claim = |relation: &str| Claim {
            subject: "s".into(),
            relation: relation.into(),
            object: "o".into(),
            relation_kind: RelationKind::Factual,
            source_span: (0, 0),
        };
        assert_eq!(ex.classify_relation(&claim("leads to")), RelationKind::Causal);
        assert_eq!(ex.classify_relation(&claim("has")), RelationKind::Attribute);
        assert_eq!(ex.classify_relation(&claim("starred in")), RelationKind::Factual);
    }

    #[test]
    fn attribute_and_factual_examples() {
        let cs = extractor().segment_claims("The car has a blue color.");
        assert_eq!(cs.claims[0].relation_kind, RelationKind::Attribute);
        assert_eq!(cs.claims[0].subject, "the car");
        assert_eq!(cs.claims[0].object, "a blue color");

        let cs = extractor().segment_claims("Leonardo DiCaprio starred in Titanic.");
        assert_eq!(cs.claims[0].relation_kind, RelationKind::Factual);
        assert_eq!(cs.claims[0].subject, "leonardo dicaprio");
        assert_eq!(cs.claims[0].relation, "starred in");
        assert_eq!(cs.claims[0].object, "titanic");
    }

    #[test]
    fn reversed_connective_stores_cause_as_subject() {
        let cs = extractor().segment_claims("Flooding occurred because heavy rainfall persisted.");
        assert_eq!(cs.claims.len(), 1);
        let c = &cs.claims[0];
        assert_eq!(c.relation_kind, RelationKind::Causal);
        assert_eq!(c.subject, "heavy rainfall persisted");
        assert_eq!(c.object, "flooding occurred");
    }

    #[test]
    fn causal_precedence_over_attribute() {
        // "is" appears before "leads to" but causal wins.
        let cs = extractor().segment_claims("Increased demand is known and leads to higher prices.");
        assert_eq!(cs.claims[0].relation_kind, RelationKind::Causal);
    }

    #[test]
    fn extract_causal_relations_filters_and_preserves_order() {
        // Mixed five-claim set with exactly two causal members.
        let text = "Heavy rainfall causes flooding. Alice is a doctor. \
                    Leonardo DiCaprio starred in Titanic. The car has a blue color. \
                    Drought leads to famine.";
        let cs = extractor().segment_claims(text);
        assert_eq!(cs.claims.len(), 5);
        let rels = extract_causal_relations(&cs);
        assert_eq!(
            rels,
            vec![
                ("heavy rainfall".to_string(), "flooding".to_string()),
                ("drought".to_string(), "famine".to_string()),
            ]
        );
    }

    #[test]
    fn no_causal_claims_gives_empty_relations() {
        let cs = extractor().segment_claims("Alice is a doctor.");
        assert!(extract_causal_relations(&cs).is_empty());
    }

    #[test]
    fn segmentation_is_deterministic() {
        let text = "Rain causes floods. The car has a blue color. Word.";
        let a = extractor().segment_claims(text);
        let b = extractor().segment_claims(text);
        assert_eq!(a, b);
    }

    #[test]
    fn spans_lie_within_input_and_contain_relation() {
        let text = "   Heavy rainfall causes flooding.  Alice is a doctor. ";
        let cs = extractor().segment_claims(text);
        for c in &cs.claims {
            let (s, e) = c.source_span;
            assert!(s < e && e <= text.len());
            assert!(text[s..e].contains(&c.relation), "{:?} in {:?}", c.relation, &text[s..e]);
        }
    }

    #[test]
    fn structureless_sentences_yield_no_claims() {
        let cs = extractor().segment_claims("Wow! Hmm. Onwards and upwards. AMAZING GRACE WINS.");
        assert!(cs.claims.is_empty(), "{:?}", cs.claims);
    }

    #[test]
    fn lexicon_file_overrides_defaults() {
        let lexicon = CausalLexicon::parse("triggers\nstems from\treverse\n").unwrap();
        let ex = ClaimExtractor::new(lexicon);
        let cs = ex.segment_claims("The outage stems from a misconfiguration.");
        assert_eq!(cs.claims[0].relation_kind, RelationKind::Causal);
        assert_eq!(cs.claims[0].subject, "a misconfiguration");
        // Default connective no longer recognized as causal.
        let cs = ex.segment_claims("Heat causes expansion of metal.");
        assert_ne!(cs.claims[0].relation_kind, RelationKind::Causal);
    }

    #[test]
    fn bad_lexicon_directive_is_rejected() {
        assert!(matches!(
            CausalLexicon::parse("causes\tsideways"),
            Err(ClaimError::BadLexicon { line: 1, .. })
        ));
    }

    #[test]
    fn claim_graph_deduplicates_edges() {
        let ex = extractor();
        let cs = ex.segment_claims("Rain causes floods. Rain causes floods.");
        assert_eq!(cs.claims.len(), 2);
        let g = to_causal_graph(&cs).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.node_count(), 2);
    }
}
