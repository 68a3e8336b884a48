//! Attribution and consistency metrics: the knowledge-graph evidence store,
//! attributable rate (AR), causal consistency score (CCS), attributable
//! count (AC), and the free-text information-density proxy.
//!
//! A claim is attributable iff the knowledge graph contains a directed path
//! of bounded length from its subject to its object whose edges all carry
//! the claim's relation kind. Hallucination is quantified as `1 - AR`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{extract_causal_relations, ClaimSet};
use crate::graph::{detect_cycles, CausalGraph, RelationKind};
use crate::text::SynonymTable;

/// Default bound on evidence-path length for attribution queries.
pub const DEFAULT_MAX_PATH_LEN: usize = 2;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("attributable rate is undefined for an empty claim set")]
    EmptyClaimSet,
    #[error("aggregate of an empty list is undefined")]
    EmptyList,
    #[error("token count is zero")]
    ZeroTokens,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KgEdge {
    pub from: String,
    pub kind: RelationKind,
    pub to: String,
    pub surface: Option<String>,
}

/// Evidence store built from source documents. Entities are normalized
/// labels; every edge endpoint is an entity by construction. Immutable
/// once built (all scoring paths take `&self`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    entities: BTreeSet<String>,
    edges: Vec<KgEdge>,
    adjacency: BTreeMap<String, Vec<(RelationKind, String)>>,
    synonyms: SynonymTable,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_synonyms(synonyms: SynonymTable) -> Self {
        Self {
            synonyms,
            ..Self::default()
        }
    }

    /// Ingest from the graph interchange object; strengths are ignored.
    pub fn from_causal_graph(graph: &CausalGraph) -> Self {
        let mut kg = Self::new();
        for node in graph.nodes() {
            kg.add_entity(&node.label);
        }
        for e in graph.edges() {
            kg.add_edge(&e.from, e.edge_type, &e.to, None);
        }
        kg
    }

    pub fn add_entity(&mut self, label: &str) {
        let canon = self.synonyms.canonical(label);
        if !canon.is_empty() {
            self.entities.insert(canon);
        }
    }

    /// Add an edge, creating endpoints as entities.
    pub fn add_edge(
        &mut self,
        from: &str,
        kind: RelationKind,
        to: &str,
        surface: Option<&str>,
    ) {
        let from = self.synonyms.canonical(from);
        let to = self.synonyms.canonical(to);
        if from.is_empty() || to.is_empty() {
            return;
        }
        self.entities.insert(from.clone());
        self.entities.insert(to.clone());
        self.adjacency
            .entry(from.clone())
            .or_default()
            .push((kind, to.clone()));
        self.edges.push(KgEdge {
            from,
            kind,
            to,
            surface: surface.map(str::to_string),
        });
    }

    pub fn contains_entity(&self, label: &str) -> bool {
        self.entities.contains(&self.synonyms.canonical(label))
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edges(&self) -> &[KgEdge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.edges.is_empty()
    }

    pub fn canonical(&self, label: &str) -> String {
        self.synonyms.canonical(label)
    }

    /// Breadth-first: does a directed path of length <= `max_len` exist
    /// from `from` to `to` using only edges of `kind`?
    pub fn has_typed_path(
        &self,
        from: &str,
        to: &str,
        kind: RelationKind,
        max_len: usize,
    ) -> bool {
        let from = self.synonyms.canonical(from);
        let to = self.synonyms.canonical(to);
        if !self.entities.contains(&from) || !self.entities.contains(&to) {
            return false;
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<(&str, usize)> = VecDeque::new();
        queue.push_back((from.as_str(), 0));
        seen.insert(from.as_str());
        while let Some((node, depth)) = queue.pop_front() {
            if depth >= max_len {
                continue;
            }
            if let Some(out) = self.adjacency.get(node) {
                for (k, next) in out {
                    if *k != kind {
                        continue;
                    }
                    if next == &to {
                        return true;
                    }
                    if seen.insert(next.as_str()) {
                        queue.push_back((next.as_str(), depth + 1));
                    }
                }
            }
        }
        false
    }
}

/// Per-response metric bundle persisted with each evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Attributable rate in [0, 1].
    pub ar: f64,
    /// Raw attributable-claim count; `ar * n_claims` exactly.
    pub attributable_count_raw: usize,
    pub n_claims: usize,
    /// 1 iff the response's causal claims form a DAG.
    pub ccs: u8,
    /// Attributable claims per source token.
    pub eid_proxy: f64,
}

/// Attributable rate of a claim set against the knowledge graph. Returns
/// `(ar, raw_count)`; undefined (error) at zero claims so the caller
/// decides policy.
pub fn attributable_rate(
    claims: &ClaimSet,
    kg: &KnowledgeGraph,
    max_path_len: usize,
) -> Result<(f64, usize), MetricsError> {
    if claims.claims.is_empty() {
        return Err(MetricsError::EmptyClaimSet);
    }
    let raw = claims
        .claims
        .iter()
        .filter(|c| kg.has_typed_path(&c.subject, &c.object, c.relation_kind, max_path_len))
        .count();
    Ok((raw as f64 / claims.claims.len() as f64, raw))
}

/// 1 iff the causal claims of the response form a DAG. A response with no
/// causal claims is vacuously consistent.
pub fn ccs_response(claims: &ClaimSet) -> u8 {
    let mut graph = CausalGraph::new();
    for (from, to) in extract_causal_relations(claims) {
        graph
            .add_edge(&from, &to, 1.0, RelationKind::Causal)
            .expect("claim-derived edges are valid");
    }
    if detect_cycles(&graph).is_dag {
        1
    } else {
        0
    }
}

/// Arithmetic mean of per-response CCS scores.
pub fn ccs_aggregate(scores: &[u8]) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    Ok(scores.iter().map(|s| *s as f64).sum::<f64>() / scores.len() as f64)
}

/// AC = AR x N_avg: the absolute number of grounded claims per response.
pub fn attributable_count(ar: f64, n_avg: f64) -> f64 {
    ar * n_avg
}

/// Free-text information-density proxy: attributable claims per token.
pub fn eid_proxy(attributable_raw: usize, token_count: usize) -> Result<f64, MetricsError> {
    if token_count == 0 {
        return Err(MetricsError::ZeroTokens);
    }
    Ok(attributable_raw as f64 / token_count as f64)
}

/// Score one response end to end. Errors on an empty claim set; the
/// harness maps that case to a flagged zero-AR record.
pub fn score_response(
    claims: &ClaimSet,
    kg: &KnowledgeGraph,
    max_path_len: usize,
) -> Result<MetricReport, MetricsError> {
    let (ar, raw) = attributable_rate(claims, kg, max_path_len)?;
    let ccs = ccs_response(claims);
    let eid = eid_proxy(raw, claims.source_token_count)?;
    Ok(MetricReport {
        ar,
        attributable_count_raw: raw,
        n_claims: claims.claims.len(),
        ccs,
        eid_proxy: eid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::Claim;

    fn claim(subject: &str, object: &str, kind: RelationKind) -> Claim {
        Claim {
            subject: subject.to_string(),
            relation: "causes".to_string(),
            object: object.to_string(),
            relation_kind: kind,
            source_span: (0, 0),
        }
    }

    fn claim_set(claims: Vec<Claim>) -> ClaimSet {
        ClaimSet {
            claims,
            source_token_count: 100,
        }
    }

    #[test]
    fn single_matching_edge_attributes_half() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("rain", RelationKind::Causal, "flooding", None);
        let cs = claim_set(vec![
            claim("rain", "flooding", RelationKind::Causal),
            claim("sun", "flooding", RelationKind::Causal),
        ]);
        let (ar, raw) = attributable_rate(&cs, &kg, 2).unwrap();
        assert_eq!(ar, 0.5);
        assert_eq!(raw, 1);
    }

    #[test]
    fn two_hop_path_counts_within_bound() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("a", RelationKind::Causal, "b", None);
        kg.add_edge("b", RelationKind::Causal, "c", None);
        let cs = claim_set(vec![claim("a", "c", RelationKind::Causal)]);
        assert_eq!(attributable_rate(&cs, &kg, 2).unwrap().1, 1);
        assert_eq!(attributable_rate(&cs, &kg, 1).unwrap().1, 0);
    }

    #[test]
    fn unknown_subject_is_not_attributable() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("rain", RelationKind::Causal, "flooding", None);
        let cs = claim_set(vec![claim("hail", "flooding", RelationKind::Causal)]);
        assert_eq!(attributable_rate(&cs, &kg, 2).unwrap(), (0.0, 0));
    }

    #[test]
    fn path_kind_must_match_claim_kind() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("a", RelationKind::Factual, "b", None);
        let cs = claim_set(vec![claim("a", "b", RelationKind::Causal)]);
        assert_eq!(attributable_rate(&cs, &kg, 2).unwrap().1, 0);
        let cs = claim_set(vec![claim("a", "b", RelationKind::Factual)]);
        assert_eq!(attributable_rate(&cs, &kg, 2).unwrap().1, 1);
    }

    #[test]
    fn mixed_kind_paths_do_not_count() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("a", RelationKind::Causal, "b", None);
        kg.add_edge("b", RelationKind::Factual, "c", None);
        let cs = claim_set(vec![claim("a", "c", RelationKind::Causal)]);
        assert_eq!(attributable_rate(&cs, &kg, 3).unwrap().1, 0);
    }

    #[test]
    fn empty_claim_set_is_an_error() {
        let kg = KnowledgeGraph::new();
        assert!(matches!(
            attributable_rate(&claim_set(vec![]), &kg, 2),
            Err(MetricsError::EmptyClaimSet)
        ));
    }

    #[test]
    fn adding_edges_never_decreases_ar() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("rain", RelationKind::Causal, "flooding", None);
        let cs = claim_set(vec![
            claim("rain", "flooding", RelationKind::Causal),
            claim("sun", "warmth", RelationKind::Causal),
        ]);
        let (before, _) = attributable_rate(&cs, &kg, 2).unwrap();
        kg.add_edge("sun", RelationKind::Causal, "warmth", None);
        let (after, _) = attributable_rate(&cs, &kg, 2).unwrap();
        assert!(after >= before);
        assert_eq!(after, 1.0);
    }

    #[test]
    fn ccs_detects_two_cycle_and_accepts_chain() {
        let cycle = claim_set(vec![
            claim("a", "b", RelationKind::Causal),
            claim("b", "a", RelationKind::Causal),
        ]);
        assert_eq!(ccs_response(&cycle), 0);

        let chain = claim_set(vec![
            claim("a", "b", RelationKind::Causal),
            claim("b", "c", RelationKind::Causal),
        ]);
        assert_eq!(ccs_response(&chain), 1);
    }

    #[test]
    fn ccs_vacuous_without_causal_claims() {
        let cs = claim_set(vec![claim("a", "b", RelationKind::Attribute)]);
        assert_eq!(ccs_response(&cs), 1);
        assert_eq!(ccs_response(&claim_set(vec![])), 1);
    }

    #[test]
    fn ccs_aggregate_means() {
        assert_eq!(ccs_aggregate(&[1, 1, 0, 0]).unwrap(), 0.5);
        assert_eq!(ccs_aggregate(&[1, 1, 1]).unwrap(), 1.0);
        assert!(matches!(ccs_aggregate(&[]), Err(MetricsError::EmptyList)));
    }

    #[test]
    fn ccs_aggregate_matches_summation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<u8> = (0..800).map(|_| rng.gen_range(0..=1u8)).collect();
        let mean = ccs_aggregate(&scores).unwrap();
        let mut acc = 0u32;
        for s in &scores {
            acc += u32::from(*s);
        }
        let oracle = f64::from(acc) / 800.0;
        assert!((mean - oracle).abs() < 1e-12);
    }

    #[test]
    fn attributable_count_is_a_product() {
        assert_eq!(attributable_count(0.0, 7.3), 0.0);
        assert_eq!(attributable_count(0.5, 6.0), 3.0);
    }

    #[test]
    fn eid_proxy_divides_by_tokens() {
        assert_eq!(eid_proxy(3, 100).unwrap(), 0.03);
        assert_eq!(eid_proxy(0, 50).unwrap(), 0.0);
        assert!(matches!(eid_proxy(1, 0), Err(MetricsError::ZeroTokens)));
    }

    #[test]
    fn report_raw_count_identity() {
        let mut kg = KnowledgeGraph::new();
        kg.add_edge("rain", RelationKind::Causal, "flooding", None);
        let cs = claim_set(vec![
            claim("rain", "flooding", RelationKind::Causal),
            claim("sun", "flooding", RelationKind::Causal),
        ]);
        let report = score_response(&cs, &kg, 2).unwrap();
        assert_eq!(report.ar * report.n_claims as f64, report.attributable_count_raw as f64);
        assert_eq!(report.ccs, 1);
        assert_eq!(report.eid_proxy, 0.01);
    }

    #[test]
    fn synonyms_apply_to_attribution() {
        let mut syn = SynonymTable::new();
        syn.insert("the automobile", "car");
        let mut kg = KnowledgeGraph::with_synonyms(syn);
        kg.add_edge("car", RelationKind::Attribute, "blue", None);
        assert!(kg.contains_entity("The Automobile"));
        let cs = claim_set(vec![claim("the automobile", "blue", RelationKind::Attribute)]);
        assert_eq!(attributable_rate(&cs, &kg, 1).unwrap().1, 1);
    }
}
