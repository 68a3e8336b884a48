//! Prompt rendering for the four evaluation conditions: direct, causal,
//! chain-of-thought, and retrieval-augmented.
//!
//! The direct and causal templates are pinned byte-for-byte by golden
//! fixtures (note the trailing space before each wrapped first line). The
//! chain-of-thought variant inserts its instruction before the answer cue;
//! the retrieval variant replaces the document with the top-5 ranked
//! chunks. Custom templates may be loaded from files using the
//! `{query}`, `{context}`, and `{causal_structure}` placeholders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DIRECT_TEMPLATE: &str = "Based on the following document, please answer \nthe question concisely and accurately.\n\nQuestion: {query}\n\nDocument:\n{context}\n\nAnswer:\n";

pub const CAUSAL_TEMPLATE: &str = "Based on the following document and its causal \nstructure, please answer the question.\n\nQuestion: {query}\n\nCausal Structure:\n{causal_structure}\n\nDocument:\n{context}\n\nAnswer:\n";

pub const COT_INSTRUCTION: &str = "Let's think step by step.";

/// Retrieval chunking defaults: window of 512 whitespace tokens with an
/// overlap of 64, top 5 chunks by term-frequency cosine similarity.
pub const RAG_CHUNK_TOKENS: usize = 512;
pub const RAG_CHUNK_OVERLAP: usize = 64;
pub const RAG_TOP_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Direct,
    Causal,
    Cot,
    Rag,
}

impl PromptKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptKind::Direct => "direct",
            PromptKind::Causal => "causal",
            PromptKind::Cot => "cot",
            PromptKind::Rag => "rag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" => Some(PromptKind::Direct),
            "causal" => Some(PromptKind::Causal),
            "cot" => Some(PromptKind::Cot),
            "rag" => Some(PromptKind::Rag),
            _ => None,
        }
    }

    pub const ALL: [PromptKind; 4] = [
        PromptKind::Direct,
        PromptKind::Causal,
        PromptKind::Cot,
        PromptKind::Rag,
    ];
}

impl std::fmt::Display for PromptKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt kind `{kind}` requires field `{field}`")]
    MissingField { kind: &'static str, field: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub query: String,
    pub context: String,
    /// Serialized causal structure; required for the causal kind.
    pub causal_structure: Option<String>,
    /// Ranked retrieval chunks; required for the rag kind.
    pub retrieved_chunks: Option<Vec<String>>,
}

impl PromptSpec {
    pub fn direct(query: impl Into<String>, context: impl Into<String>) -> Self {
        Self {
            kind: PromptKind::Direct,
            query: query.into(),
            context: context.into(),
            causal_structure: None,
            retrieved_chunks: None,
        }
    }

    pub fn causal(
        query: impl Into<String>,
        context: impl Into<String>,
        causal_structure: impl Into<String>,
    ) -> Self {
        Self {
            kind: PromptKind::Causal,
            query: query.into(),
            context: context.into(),
            causal_structure: Some(causal_structure.into()),
            retrieved_chunks: None,
        }
    }

    pub fn cot(query: impl Into<String>, context: impl Into<String>) -> Self {
        Self {
            kind: PromptKind::Cot,
            ..Self::direct(query, context)
        }
    }

    pub fn rag(
        query: impl Into<String>,
        context: impl Into<String>,
        retrieved_chunks: Vec<String>,
    ) -> Self {
        Self {
            kind: PromptKind::Rag,
            query: query.into(),
            context: context.into(),
            causal_structure: None,
            retrieved_chunks: Some(retrieved_chunks),
        }
    }
}

/// Override container for file-loaded templates.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub direct: String,
    pub causal: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            direct: DIRECT_TEMPLATE.to_string(),
            causal: CAUSAL_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Load template overrides from files; placeholders are `{query}`,
    /// `{context}`, and `{causal_structure}`.
    pub fn from_files(
        direct: &std::path::Path,
        causal: &std::path::Path,
    ) -> std::io::Result<Self> {
        Ok(Self {
            direct: std::fs::read_to_string(direct)?,
            causal: std::fs::read_to_string(causal)?,
        })
    }
}

/// Render a prompt with the built-in templates.
pub fn render(spec: &PromptSpec) -> Result<String, PromptError> {
    render_with(spec, &PromptTemplates::default())
}

/// Render a prompt with explicit templates. Pure and deterministic.
pub fn render_with(spec: &PromptSpec, templates: &PromptTemplates) -> Result<String, PromptError> {
    let fill = |template: &str, context: &str| {
        template
            .replace("{query}", &spec.query)
            .replace("{context}", context)
    };
    match spec.kind {
        PromptKind::Direct => Ok(fill(&templates.direct, &spec.context)),
        PromptKind::Causal => {
            let structure =
                spec.causal_structure
                    .as_deref()
                    .ok_or(PromptError::MissingField {
                        kind: "causal",
                        field: "causal_structure",
                    })?;
            Ok(fill(&templates.causal, &spec.context).replace("{causal_structure}", structure))
        }
        PromptKind::Cot => {
            let body = fill(&templates.direct, &spec.context);
            // Insert the step-by-step instruction before the answer cue;
            // fall back to appending when a custom template has none.
            Ok(match body.rfind("Answer:") {
                Some(pos) => format!(
                    "{}{}\n\n{}",
                    &body[..pos],
                    COT_INSTRUCTION,
                    &body[pos..]
                ),
                None => format!("{body}\n{COT_INSTRUCTION}\n"),
            })
        }
        PromptKind::Rag => {
            let chunks = spec
                .retrieved_chunks
                .as_deref()
                .ok_or(PromptError::MissingField {
                    kind: "rag",
                    field: "retrieved_chunks",
                })?;
            Ok(fill(&templates.direct, &chunks.join("\n\n")))
        }
    }
}

/// Rank context chunks against the query by cosine similarity over
/// term-frequency vectors; returns the top `RAG_TOP_K` in rank order.
/// Chunks of `RAG_CHUNK_TOKENS` whitespace tokens overlap by
/// `RAG_CHUNK_OVERLAP`.
pub fn rank_chunks(context: &str, query: &str) -> Vec<String> {
    rank_chunks_with(context, query, RAG_CHUNK_TOKENS, RAG_CHUNK_OVERLAP, RAG_TOP_K)
}

pub fn rank_chunks_with(
    context: &str,
    query: &str,
    chunk_tokens: usize,
    overlap: usize,
    top_k: usize,
) -> Vec<String> {
    assert!(chunk_tokens > overlap, "chunk size must exceed overlap");
    let tokens: Vec<&str> = context.split_whitespace().collect();
    if tokens.is_empty() {
        return Vec::new();
    }
    let mut chunks = Vec::new();
    let step = chunk_tokens - overlap;
    let mut start = 0;
    loop {
        let end = (start + chunk_tokens).min(tokens.len());
        chunks.push(tokens[start..end].join(" "));
        if end == tokens.len() {
            break;
        }
        start += step;
    }

    let query_tf = term_frequencies(query);
    let mut scored: Vec<(usize, f64, String)> = chunks
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let score = cosine(&query_tf, &term_frequencies(&chunk));
            (i, score, chunk)
        })
        .collect();
    // Stable by construction: sort on (score desc, original index asc).
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().take(top_k).map(|(_, _, c)| c).collect()
}

fn term_frequencies(text: &str) -> std::collections::BTreeMap<String, f64> {
    let mut tf = std::collections::BTreeMap::new();
    for token in text.split_whitespace() {
        let term: String = token
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if !term.is_empty() {
            *tf.entry(term).or_insert(0.0) += 1.0;
        }
    }
    tf
}

fn cosine(
    a: &std::collections::BTreeMap<String, f64>,
    b: &std::collections::BTreeMap<String, f64>,
) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(term, wa)| b.get(term).map(|wb| wa * wb))
        .sum();
    let na: f64 = a.values().map(|w| w * w).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|w| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_render_shape() {
        let out = render(&PromptSpec::direct("Q", "D")).unwrap();
        assert!(out.starts_with(
            "Based on the following document, please answer \nthe question concisely and accurately."
        ));
        assert!(out.contains("Question: Q\n"));
        assert!(out.contains("Document:\nD\n"));
        assert!(out.ends_with("Answer:\n"));
    }

    #[test]
    fn causal_render_inserts_structure_between_question_and_document() {
        let out = render(&PromptSpec::causal("Q", "D", "G")).unwrap();
        assert!(out.contains("Causal Structure:\nG\n"));
        let question = out.find("Question:").unwrap();
        let structure = out.find("Causal Structure:").unwrap();
        let document = out.find("Document:").unwrap();
        assert!(question < structure && structure < document);
    }

    #[test]
    fn empty_context_renders_without_error() {
        let out = render(&PromptSpec::direct("Q", "")).unwrap();
        assert!(out.contains("Document:\n\n"));
    }

    #[test]
    fn missing_fields_are_rejected() {
        let mut spec = PromptSpec::direct("Q", "D");
        spec.kind = PromptKind::Causal;
        assert!(matches!(
            render(&spec),
            Err(PromptError::MissingField { field: "causal_structure", .. })
        ));
        spec.kind = PromptKind::Rag;
        assert!(matches!(
            render(&spec),
            Err(PromptError::MissingField { field: "retrieved_chunks", .. })
        ));
    }

    #[test]
    fn cot_inserts_instruction_before_answer_cue() {
        let out = render(&PromptSpec::cot("Q", "D")).unwrap();
        assert!(out.contains("Let's think step by step.\n\nAnswer:\n"));
    }

    #[test]
    fn rag_substitutes_chunks_for_context() {
        let spec = PromptSpec::rag("Q", "ignored", vec!["c1".into(), "c2".into()]);
        let out = render(&spec).unwrap();
        assert!(out.contains("Document:\nc1\n\nc2\n"));
        assert!(!out.contains("ignored"));
    }

    #[test]
    fn render_is_deterministic() {
        let spec = PromptSpec::causal("Q", "D", "G");
        assert_eq!(render(&spec).unwrap(), render(&spec).unwrap());
    }

    #[test]
    fn chunk_ranking_prefers_query_terms() {
        // 12 tokens per chunk, no overlap, small corpus.
        let context = (0..6)
            .map(|i| {
                if i == 4 {
                    "glucose insulin metformin trial outcome endpoint hazard ratio cohort arm dose visit".to_string()
                } else {
                    format!("filler{i} words about nothing specific at all padding tokens here now")
                }
            })
            .collect::<Vec<_>>()
            .join(" ");
        let top = rank_chunks_with(&context, "metformin trial outcome", 12, 0, 2);
        assert_eq!(top.len(), 2);
        assert!(top[0].contains("metformin"));
    }

    #[test]
    fn chunking_ties_break_by_position() {
        let context = "a b c d e f g h";
        let top = rank_chunks_with(context, "zzz", 4, 1, 3);
        // All scores zero: original order preserved.
        assert_eq!(top[0], "a b c d");
    }

    #[test]
    fn empty_context_has_no_chunks() {
        assert!(rank_chunks("", "q").is_empty());
    }
}
