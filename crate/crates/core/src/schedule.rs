//! Proactive retrieval scheduling: derive one query per exogenous graph
//! node, dispatch all of them in parallel before generation starts, merge
//! the evidence deterministically, and model end-to-end latency.
//!
//! The closed-form model:
//!
//! ```text
//! sequential = t_parse + k * (t_gen + t_switch) + sum(t_web_i)
//! proactive  = t_parse + t_causal + max(t_web_i) + t_gen
//! speedup    = sequential / proactive
//! ```
//!
//! Execution under a virtual clock is a discrete-event simulation with a
//! bounded number of in-flight queries; under the system clock it uses one
//! thread per in-flight query. Either way results merge in plan order, so
//! output is independent of completion order.
//!
//! Two idle figures are recorded because published conventions differ:
//! `idle_generation` is time generation pauses for retrieval after it has
//! started (zero in proactive mode by construction), while `idle_residual`
//! is the serialization cost of causal analysis in front of retrieval
//! (`t_gen_start - (parse end + retrieval wall)`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, SearchBackend};
use crate::clock::Clock;
use crate::graph::{serialize_graph, topological_order, CausalGraph, NodeOrigin};

pub const DEFAULT_SCHEDULING_OVERHEAD: f64 = 0.05;

/// Calibration constants used to reconstruct per-phase latencies from a
/// measured (sequential, parallel) pair: three retrieval rounds with a
/// descending per-query latency spread, web latency twice generation
/// latency, fixed causal-analysis cost, no switch overhead.
pub const CALIBRATION_ROUNDS: usize = 3;
pub const CALIBRATION_SPREAD: [f64; 3] = [1.0, 0.85, 0.7];
pub const CALIBRATION_WEB_OVER_GEN: f64 = 2.0;
pub const CALIBRATION_T_CAUSAL: f64 = 0.45;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("query for node `{node}` failed: {source}")]
    QueryFailed {
        node: String,
        source: BackendError,
    },
    #[error("proactive latency is zero")]
    DivisionByZero,
    #[error("bad latency parameters: {0}")]
    Params(String),
    #[error("calibration infeasible: {0}")]
    Calibration(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedQuery {
    pub node: String,
    pub query: String,
}

/// One query per exogenous node, ordered by topological position then
/// label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    pub queries: Vec<PlannedQuery>,
    pub concurrency_limit: usize,
}

impl RetrievalPlan {
    pub fn with_concurrency_limit(mut self, limit: usize) -> Self {
        assert!(limit >= 1);
        self.concurrency_limit = limit;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailurePolicy {
    FailFast,
    /// Record the failure and keep going; missing evidence is noted in the
    /// merged context. The default.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub node: String,
    pub query: String,
    pub snippets: Vec<String>,
    pub ok: bool,
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryTiming {
    pub dispatch: f64,
    pub complete: f64,
}

/// Timestamped record of the parse / causal-analysis / dispatch /
/// generation phases. Durations for the two analysis phases, absolute
/// clock timestamps for queries and generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub t_parse: f64,
    pub t_causal: f64,
    pub per_query: Vec<QueryTiming>,
    pub t_gen_start: f64,
    pub t_gen_end: f64,
    /// Generation-blocked time after generation has started.
    pub idle_generation: f64,
    /// Delay of generation start beyond (parse end + retrieval wall).
    pub idle_residual: f64,
}

impl ScheduleTrace {
    /// Retrieval wall time: first dispatch to last completion.
    pub fn retrieval_wall(&self) -> f64 {
        let first = self
            .per_query
            .iter()
            .map(|q| q.dispatch)
            .fold(f64::INFINITY, f64::min);
        let last = self.per_query.iter().map(|q| q.complete).fold(0.0, f64::max);
        if self.per_query.is_empty() {
            0.0
        } else {
            last - first
        }
    }

    /// Check the proactive-mode invariants: every dispatch precedes
    /// generation start, dispatch <= complete, and generation never idles.
    pub fn check_proactive(&self) -> Result<(), String> {
        for (i, q) in self.per_query.iter().enumerate() {
            if q.dispatch > q.complete {
                return Err(format!("query {i}: dispatch after completion"));
            }
            if q.dispatch > self.t_gen_start {
                return Err(format!("query {i}: dispatched after generation start"));
            }
        }
        if self.idle_generation != 0.0 {
            return Err(format!(
                "generation idled {:.3}s in proactive mode",
                self.idle_generation
            ));
        }
        Ok(())
    }

    /// Line-delimited event export: `name timestamp` per line, seconds.
    pub fn events(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("parse_end".to_string(), self.t_parse),
            ("causal_end".to_string(), self.t_parse + self.t_causal),
        ];
        for (i, q) in self.per_query.iter().enumerate() {
            out.push((format!("q{i}_dispatch"), q.dispatch));
            out.push((format!("q{i}_complete"), q.complete));
        }
        out.push(("gen_start".to_string(), self.t_gen_start));
        out.push(("gen_end".to_string(), self.t_gen_end));
        out
    }

    pub fn render_events(&self) -> String {
        let mut s = String::new();
        for (name, t) in self.events() {
            s.push_str(&format!("{name} {t:.6}\n"));
        }
        s
    }
}

/// Analytic latency parameters. `t_web` holds either a single uniform
/// per-round latency or one entry per retrieval round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub t_parse: f64,
    pub t_gen: f64,
    pub t_web: Vec<f64>,
    pub t_switch: f64,
    pub t_causal: f64,
    pub k: usize,
}

impl LatencyParams {
    pub fn new(
        t_parse: f64,
        t_gen: f64,
        t_web: Vec<f64>,
        t_switch: f64,
        t_causal: f64,
        k: usize,
    ) -> Result<Self, ScheduleError> {
        let params = Self {
            t_parse,
            t_gen,
            t_web,
            t_switch,
            t_causal,
            k,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let all = [self.t_parse, self.t_gen, self.t_switch, self.t_causal];
        if all.iter().chain(&self.t_web).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ScheduleError::Params(
                "latencies must be finite and non-negative".to_string(),
            ));
        }
        if self.k > 0 && !(self.t_web.len() == 1 || self.t_web.len() == self.k) {
            return Err(ScheduleError::Params(format!(
                "t_web needs 1 or {} entries, got {}",
                self.k,
                self.t_web.len()
            )));
        }
        Ok(())
    }

    /// Per-round web latencies: empty at k = 0, a scalar replicated k
    /// times, or the explicit per-round list.
    pub fn web_rounds(&self) -> Vec<f64> {
        if self.k == 0 {
            return Vec::new();
        }
        if self.t_web.len() == 1 {
            return vec![self.t_web[0]; self.k];
        }
        self.t_web.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    Sequential,
    Proactive,
}

/// Closed-form latency for one mode; max over an empty web set is zero.
pub fn predict_latency(params: &LatencyParams, mode: ScheduleMode) -> f64 {
    let web = params.web_rounds();
    match mode {
        ScheduleMode::Sequential => {
            params.t_parse
                + params.k as f64 * (params.t_gen + params.t_switch)
                + web.iter().sum::<f64>()
        }
        ScheduleMode::Proactive => {
            let max_web = web.iter().fold(0.0f64, |a, b| a.max(*b));
            params.t_parse + params.t_causal + max_web + params.t_gen
        }
    }
}

/// Sequential over proactive latency.
pub fn speedup(params: &LatencyParams) -> Result<f64, ScheduleError> {
    let proactive = predict_latency(params, ScheduleMode::Proactive);
    if proactive <= 0.0 {
        return Err(ScheduleError::DivisionByZero);
    }
    Ok(predict_latency(params, ScheduleMode::Sequential) / proactive)
}

const QUERY_STOPWORDS: [&str; 18] = [
    "the", "a", "an", "and", "or", "of", "in", "on", "for", "to", "with", "that", "this",
    "these", "those", "based", "how", "what",
];

/// Build the search query for one node: the node's terms, its incident
/// edges' endpoint terms, and the salient query terms, deduplicated in
/// first-occurrence order and space-joined.
pub fn generate_query(graph: &CausalGraph, node_label: &str, query: &str) -> String {
    let mut terms: Vec<String> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut push = |term: &str| {
        let cleaned = term.trim_matches(|c: char| ",.;:!?\"'".contains(c));
        if cleaned.is_empty() {
            return;
        }
        if seen.insert(cleaned.to_lowercase()) {
            terms.push(cleaned.to_string());
        }
    };

    for token in node_label.split_whitespace() {
        push(token);
    }
    for edge in graph.incident_edges(node_label) {
        for token in edge.from.split_whitespace().chain(edge.to.split_whitespace()) {
            push(token);
        }
    }
    for token in query.split_whitespace() {
        let core = token.trim_matches(|c: char| !c.is_alphanumeric());
        if core.chars().count() >= 4 && !QUERY_STOPWORDS.contains(&core.to_lowercase().as_str()) {
            push(token);
        }
    }
    terms.join(" ")
}

/// One query per exogenous node. Requires origins to be filled
/// ([`crate::graph::classify_nodes`]); nodes are visited in topological
/// order (label order when the causal subgraph is cyclic).
pub fn plan_retrieval(graph: &CausalGraph, query: &str) -> RetrievalPlan {
    let order: Vec<String> = match topological_order(graph) {
        Ok(order) => order,
        Err(_) => graph.nodes().map(|n| n.label.clone()).collect(),
    };
    let queries: Vec<PlannedQuery> = order
        .iter()
        .filter(|label| {
            graph
                .node(label)
                .map(|n| n.origin == NodeOrigin::Exogenous)
                .unwrap_or(false)
        })
        .map(|label| PlannedQuery {
            node: label.clone(),
            query: generate_query(graph, label, query),
        })
        .collect();
    let concurrency_limit = queries.len().max(1);
    RetrievalPlan {
        queries,
        concurrency_limit,
    }
}

/// Dispatch every planned query before any generation begins. Under a
/// virtual clock this is a discrete-event simulation honoring the
/// concurrency limit; under the system clock each in-flight query gets a
/// thread. Evidence is keyed by node and merged in plan order regardless
/// of completion order.
pub fn execute_plan(
    plan: &RetrievalPlan,
    client: &dyn SearchBackend,
    clock: &Clock,
    policy: FailurePolicy,
) -> Result<(Vec<Evidence>, ScheduleTrace), ScheduleError> {
    match clock {
        Clock::Virtual(_) => execute_plan_virtual(plan, client, clock, policy),
        Clock::System(_) => execute_plan_threaded(plan, client, clock, policy),
    }
}

fn execute_plan_virtual(
    plan: &RetrievalPlan,
    client: &dyn SearchBackend,
    clock: &Clock,
    policy: FailurePolicy,
) -> Result<(Vec<Evidence>, ScheduleTrace), ScheduleError> {
    let t0 = clock.now();
    let limit = plan.concurrency_limit.max(1);
    // Earliest-free time per slot; queries claim the first free slot in
    // plan order, which is FIFO dispatch.
    let mut slots = vec![t0; limit.min(plan.queries.len()).max(1)];
    let mut evidence = Vec::with_capacity(plan.queries.len());
    let mut timings = Vec::with_capacity(plan.queries.len());
    let mut last_complete = t0;

    for planned in &plan.queries {
        let slot = slots
            .iter_mut()
            .min_by(|a, b| a.partial_cmp(b).expect("times are finite"))
            .expect("at least one slot");
        let dispatch = *slot;
        let (item, latency) = match client.search(&planned.query) {
            Ok(result) => {
                let latency = result.latency;
                (
                    Evidence {
                        node: planned.node.clone(),
                        query: planned.query.clone(),
                        snippets: result.snippets,
                        ok: result.ok,
                        latency,
                    },
                    latency,
                )
            }
            Err(err) => match policy {
                FailurePolicy::FailFast => {
                    return Err(ScheduleError::QueryFailed {
                        node: planned.node.clone(),
                        source: err,
                    })
                }
                FailurePolicy::BestEffort => (
                    Evidence {
                        node: planned.node.clone(),
                        query: planned.query.clone(),
                        snippets: Vec::new(),
                        ok: false,
                        latency: 0.0,
                    },
                    0.0,
                ),
            },
        };
        let complete = dispatch + latency;
        *slot = complete;
        last_complete = last_complete.max(complete);
        timings.push(QueryTiming { dispatch, complete });
        evidence.push(item);
    }

    clock.advance_to(last_complete);
    let trace = ScheduleTrace {
        per_query: timings,
        ..ScheduleTrace::default()
    };
    Ok((evidence, trace))
}

fn execute_plan_threaded(
    plan: &RetrievalPlan,
    client: &dyn SearchBackend,
    clock: &Clock,
    policy: FailurePolicy,
) -> Result<(Vec<Evidence>, ScheduleTrace), ScheduleError> {
    use std::sync::{Condvar, Mutex};

    struct Semaphore {
        permits: Mutex<usize>,
        cv: Condvar,
    }
    impl Semaphore {
        fn acquire(&self) {
            let mut permits = self.permits.lock().unwrap();
            while *permits == 0 {
                permits = self.cv.wait(permits).unwrap();
            }
            *permits -= 1;
        }
        fn release(&self) {
            *self.permits.lock().unwrap() += 1;
            self.cv.notify_one();
        }
    }

    let semaphore = Semaphore {
        permits: Mutex::new(plan.concurrency_limit.max(1)),
        cv: Condvar::new(),
    };
    type Slot = (usize, Result<(Evidence, QueryTiming), (String, BackendError)>);
    let results: Mutex<Vec<Slot>> = Mutex::new(Vec::with_capacity(plan.queries.len()));

    std::thread::scope(|scope| {
        for (i, planned) in plan.queries.iter().enumerate() {
            let semaphore = &semaphore;
            let results = &results;
            let clock = clock.clone();
            scope.spawn(move || {
                semaphore.acquire();
                let dispatch = clock.now();
                let outcome = client.search(&planned.query);
                let complete = clock.now();
                semaphore.release();
                let entry = match outcome {
                    Ok(result) => Ok((
                        Evidence {
                            node: planned.node.clone(),
                            query: planned.query.clone(),
                            snippets: result.snippets,
                            ok: result.ok,
                            latency: complete - dispatch,
                        },
                        QueryTiming { dispatch, complete },
                    )),
                    Err(err) => Err((planned.node.clone(), err)),
                };
                results.lock().unwrap().push((i, entry));
            });
        }
    });

    let mut collected = results.into_inner().unwrap();
    collected.sort_by_key(|(i, _)| *i);
    let mut evidence = Vec::with_capacity(collected.len());
    let mut timings = Vec::with_capacity(collected.len());
    for (i, entry) in collected {
        match entry {
            Ok((item, timing)) => {
                evidence.push(item);
                timings.push(timing);
            }
            Err((node, err)) => match policy {
                FailurePolicy::FailFast => {
                    return Err(ScheduleError::QueryFailed { node, source: err })
                }
                FailurePolicy::BestEffort => {
                    let planned = &plan.queries[i];
                    evidence.push(Evidence {
                        node,
                        query: planned.query.clone(),
                        snippets: Vec::new(),
                        ok: false,
                        latency: 0.0,
                    });
                    timings.push(QueryTiming {
                        dispatch: clock.now(),
                        complete: clock.now(),
                    });
                }
            },
        }
    }
    let trace = ScheduleTrace {
        per_query: timings,
        ..ScheduleTrace::default()
    };
    Ok((evidence, trace))
}

/// Merge retrieved evidence into the context: original text, then the
/// serialized causal structure, then one evidence line per node in plan
/// order. Re-merging identical inputs is a no-op.
pub fn merge_context(context: &str, graph: &CausalGraph, evidence: &[Evidence]) -> String {
    let mut suffix = String::new();
    suffix.push_str("\n\nCausal Structure:\n");
    suffix.push_str(&serialize_graph(graph));
    if !evidence.is_empty() {
        suffix.push_str("\n\nExternal Evidence:\n");
        for item in evidence {
            if item.ok {
                suffix.push_str(&format!("- {}: {}\n", item.node, item.snippets.join(" | ")));
            } else {
                suffix.push_str(&format!("- {}: [unavailable]\n", item.node));
            }
        }
    }
    if context.ends_with(&suffix) {
        return context.to_string();
    }
    format!("{context}{suffix}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub total: f64,
    pub trace: ScheduleTrace,
}

/// Run the full phase sequence for one mode against a mock search client
/// under the given clock (virtual in tests and the `simulate` command).
/// The retrieval phase goes through [`execute_plan`], so the simulated
/// total is an independent route to the closed-form prediction.
pub fn simulate_pipeline(
    params: &LatencyParams,
    mode: ScheduleMode,
    clock: &Clock,
) -> Result<SimulatedRun, ScheduleError> {
    params.validate()?;
    let web = params.web_rounds();
    let t0 = clock.now();
    let mut trace = ScheduleTrace {
        t_parse: params.t_parse,
        ..ScheduleTrace::default()
    };

    match mode {
        ScheduleMode::Sequential => {
            clock.sleep(params.t_parse);
            trace.t_gen_start = clock.now();
            for (i, w) in web.iter().enumerate() {
                clock.sleep(params.t_gen);
                let dispatch = clock.now();
                clock.sleep(*w);
                trace.per_query.push(QueryTiming {
                    dispatch,
                    complete: clock.now(),
                });
                trace.idle_generation += *w;
                clock.sleep(params.t_switch);
                trace.idle_generation += params.t_switch;
                let _ = i;
            }
            trace.t_gen_end = clock.now();
        }
        ScheduleMode::Proactive => {
            clock.sleep(params.t_parse);
            clock.sleep(params.t_causal);
            trace.t_causal = params.t_causal;
            let mut search = crate::backend::MockSearchBackend::new();
            let queries: Vec<PlannedQuery> = web
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let q = format!("q{i}");
                    search.set_latency(&q, *w);
                    PlannedQuery {
                        node: format!("n{i}"),
                        query: q,
                    }
                })
                .collect();
            let plan = RetrievalPlan {
                concurrency_limit: queries.len().max(1),
                queries,
            };
            let (_, retrieval_trace) =
                execute_plan(&plan, &search, clock, FailurePolicy::BestEffort)?;
            trace.per_query = retrieval_trace.per_query;
            trace.t_gen_start = clock.now();
            // Generation starts once; causal analysis is the only thing
            // standing between parse+retrieval and generation.
            trace.idle_residual =
                trace.t_gen_start - (t0 + params.t_parse + trace.retrieval_wall());
            clock.sleep(params.t_gen);
            trace.t_gen_end = clock.now();
            trace.check_proactive().map_err(ScheduleError::Params)?;
        }
    }

    Ok(SimulatedRun {
        total: clock.now() - t0,
        trace,
    })
}

/// Reconstruct per-phase latencies from a measured (sequential, parallel)
/// wall-time pair using the calibration constants. The returned parameters
/// reproduce both measurements exactly under [`predict_latency`] and
/// [`simulate_pipeline`].
pub fn calibrate_from_pair(sequential: f64, parallel: f64) -> Result<LatencyParams, ScheduleError> {
    if !(sequential.is_finite() && parallel.is_finite()) || sequential <= 0.0 || parallel <= 0.0 {
        return Err(ScheduleError::Calibration(
            "latencies must be positive".to_string(),
        ));
    }
    let spread_sum: f64 = CALIBRATION_SPREAD.iter().sum();
    let k = CALIBRATION_ROUNDS as f64;
    // sequential = parse + k*gen + web_over_gen*gen*spread_sum
    // parallel   = parse + t_causal + web_over_gen*gen + gen
    let denom = k + CALIBRATION_WEB_OVER_GEN * spread_sum
        - (1.0 + CALIBRATION_WEB_OVER_GEN);
    let t_gen = (sequential - parallel + CALIBRATION_T_CAUSAL) / denom;
    let t_web: Vec<f64> = CALIBRATION_SPREAD
        .iter()
        .map(|s| CALIBRATION_WEB_OVER_GEN * t_gen * s)
        .collect();
    let t_parse = sequential - k * t_gen - t_web.iter().sum::<f64>();
    if t_gen <= 0.0 || t_parse <= 0.0 {
        return Err(ScheduleError::Calibration(format!(
            "pair ({sequential}, {parallel}) yields non-positive phases"
        )));
    }
    LatencyParams::new(
        t_parse,
        t_gen,
        t_web,
        0.0,
        CALIBRATION_T_CAUSAL,
        CALIBRATION_ROUNDS,
    )
}

/// Parse a `key=value` latency parameter file. `t_web` accepts a
/// comma-separated list; `k` is the retrieval-round count.
pub fn parse_latency_params(text: &str) -> Result<LatencyParams, ScheduleError> {
    let mut t_parse = 0.0;
    let mut t_gen = 0.0;
    let mut t_web = vec![0.0];
    let mut t_switch = 0.0;
    let mut t_causal = 0.0;
    let mut k = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ScheduleError::Params(format!("line {}: expected key=value", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: String| ScheduleError::Params(format!("line {}: {what}", i + 1));
        let parse_f = |v: &str| -> Result<f64, ScheduleError> {
            v.parse::<f64>()
                .map_err(|_| bad(format!("bad number `{v}`")))
        };
        match key {
            "t_parse" => t_parse = parse_f(value)?,
            "t_gen" => t_gen = parse_f(value)?,
            "t_switch" => t_switch = parse_f(value)?,
            "t_causal" => t_causal = parse_f(value)?,
            "k" => {
                k = value
                    .parse()
                    .map_err(|_| bad(format!("bad round count `{value}`")))?
            }
            "t_web" => {
                t_web = value
                    .split(',')
                    .map(|v| parse_f(v.trim()))
                    .collect::<Result<Vec<f64>, _>>()?;
                if t_web.is_empty() {
                    return Err(bad("t_web needs at least one value".to_string()));
                }
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    LatencyParams::new(t_parse, t_gen, t_web, t_switch, t_causal, k)
}

pub fn render_latency_params(params: &LatencyParams) -> String {
    let web = params
        .t_web
        .iter()
        .map(|w| format!("{w}"))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "t_parse={}\nt_gen={}\nt_web={}\nt_switch={}\nt_causal={}\nk={}\n",
        params.t_parse, params.t_gen, web, params.t_switch, params.t_causal, params.k
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockSearchBackend;
    use crate::graph::{classify_nodes, RelationKind};
    use crate::metrics::KnowledgeGraph;

    fn params(
        t_parse: f64,
        t_gen: f64,
        web: &[f64],
        t_switch: f64,
        t_causal: f64,
        k: usize,
    ) -> LatencyParams {
        LatencyParams::new(t_parse, t_gen, web.to_vec(), t_switch, t_causal, k).unwrap()
    }

    #[test]
    fn worked_latency_example() {
        let p = params(9.0, 1.0, &[2.0], 0.0, 0.5, 3);
        assert_eq!(predict_latency(&p, ScheduleMode::Sequential), 18.0);
        assert_eq!(predict_latency(&p, ScheduleMode::Proactive), 12.5);
        assert!((speedup(&p).unwrap() - 1.44).abs() < 0.005);
    }

    #[test]
    fn zero_rounds_degenerates() {
        let p = params(4.0, 1.0, &[2.0], 0.1, 0.5, 0);
        assert_eq!(predict_latency(&p, ScheduleMode::Sequential), 4.0);
        assert_eq!(predict_latency(&p, ScheduleMode::Proactive), 5.5);
    }

    #[test]
    fn all_zero_params_are_zero_latency() {
        let p = params(0.0, 0.0, &[0.0], 0.0, 0.0, 0);
        assert_eq!(predict_latency(&p, ScheduleMode::Sequential), 0.0);
        assert_eq!(predict_latency(&p, ScheduleMode::Proactive), 0.0);
        assert!(matches!(speedup(&p), Err(ScheduleError::DivisionByZero)));
    }

    #[test]
    fn identical_modes_give_unity_speedup() {
        // k=1 with t_causal = t_switch = 0 and no parse cost: both modes
        // are t_gen + t_web.
        let p = params(0.0, 1.0, &[2.0], 0.0, 0.0, 1);
        assert_eq!(speedup(&p).unwrap(), 1.0);
    }

    #[test]
    fn table_pair_calibration_is_exact() {
        for (seq, par) in [(18.71, 11.22), (6.92, 3.83), (12.16, 5.44), (13.20, 7.32), (8.38, 5.58)] {
            let p = calibrate_from_pair(seq, par).unwrap();
            assert!((predict_latency(&p, ScheduleMode::Sequential) - seq).abs() < 1e-9);
            assert!((predict_latency(&p, ScheduleMode::Proactive) - par).abs() < 1e-9);
        }
        // The measured 6.92s/3.83s pair is a 1.807x ratio.
        let p = calibrate_from_pair(6.92, 3.83).unwrap();
        assert!((speedup(&p).unwrap() - 1.807).abs() < 0.001);
        assert!(calibrate_from_pair(1.0, 50.0).is_err());
    }

    fn exo_graph() -> CausalGraph {
        let mut g = CausalGraph::new();
        g.add_edge("glp-1 agonist z", "mace outcomes", 0.9, RelationKind::Causal)
            .unwrap();
        g.add_edge("metformin", "mace outcomes", 0.9, RelationKind::Causal)
            .unwrap();
        classify_nodes(&g, &KnowledgeGraph::new())
    }

    #[test]
    fn plan_orders_topologically_then_by_label() {
        let query = "The 2025 trial XYZ-CV studied metformin vs GLP-1 agonist Z for MACE.";
        let plan = plan_retrieval(&exo_graph(), query);
        assert_eq!(plan.queries.len(), 3);
        // Roots first (label order), then the sink.
        assert_eq!(plan.queries[0].node, "glp-1 agonist z");
        assert_eq!(plan.queries[1].node, "metformin");
        assert_eq!(plan.queries[2].node, "mace outcomes");
        let q = &plan.queries[1].query;
        assert!(q.contains("metformin"), "{q}");
        assert!(q.contains("2025"), "{q}");
        assert!(q.contains("XYZ-CV"), "{q}");
    }

    #[test]
    fn all_endogenous_graph_plans_nothing() {
        let mut kg = KnowledgeGraph::new();
        kg.add_entity("a");
        kg.add_entity("b");
        let mut g = CausalGraph::new();
        g.add_edge("a", "b", 0.5, RelationKind::Causal).unwrap();
        let plan = plan_retrieval(&classify_nodes(&g, &kg), "query");
        assert!(plan.is_empty());
    }

    #[test]
    fn generate_query_deduplicates_terms() {
        let g = exo_graph();
        let q = generate_query(&g, "metformin", "metformin metformin Metformin trial");
        let lower = q.to_lowercase();
        assert_eq!(lower.matches("metformin").count(), 1, "{q}");
    }

    fn three_query_plan(latencies: &[f64], search: &mut MockSearchBackend) -> RetrievalPlan {
        let queries: Vec<PlannedQuery> = latencies
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let q = format!("q{i}");
                search.set_latency(&q, *w);
                PlannedQuery {
                    node: format!("n{i}"),
                    query: q,
                }
            })
            .collect();
        RetrievalPlan {
            concurrency_limit: queries.len(),
            queries,
        }
    }

    #[test]
    fn unlimited_concurrency_wall_time_is_max() {
        let mut search = MockSearchBackend::new();
        let plan = three_query_plan(&[2.0, 1.5, 1.8], &mut search);
        let clock = Clock::new_virtual();
        let (evidence, trace) =
            execute_plan(&plan, &search, &clock, FailurePolicy::BestEffort).unwrap();
        assert_eq!(evidence.len(), 3);
        assert_eq!(clock.now(), 2.0);
        assert_eq!(trace.retrieval_wall(), 2.0);
        // Everything dispatched at time zero.
        assert!(trace.per_query.iter().all(|q| q.dispatch == 0.0));
    }

    #[test]
    fn single_query_wall_time_is_its_latency() {
        let mut search = MockSearchBackend::new();
        let plan = three_query_plan(&[1.3], &mut search);
        let clock = Clock::new_virtual();
        execute_plan(&plan, &search, &clock, FailurePolicy::BestEffort).unwrap();
        assert_eq!(clock.now(), 1.3);
    }

    #[test]
    fn limit_one_degenerates_to_sequential() {
        let mut search = MockSearchBackend::new();
        let plan = three_query_plan(&[2.0, 1.5, 1.8], &mut search).with_concurrency_limit(1);
        let clock = Clock::new_virtual();
        let (_, trace) = execute_plan(&plan, &search, &clock, FailurePolicy::BestEffort).unwrap();
        assert!((clock.now() - 5.3).abs() < 1e-9);
        assert_eq!(trace.per_query[1].dispatch, 2.0);
        assert_eq!(trace.per_query[2].dispatch, 3.5);
    }

    #[test]
    fn best_effort_records_failures_fail_fast_errors() {
        let mut search = MockSearchBackend::new();
        let plan = three_query_plan(&[1.0, 1.0], &mut search);
        search.fail_query("q0");
        let clock = Clock::new_virtual();
        let (evidence, _) =
            execute_plan(&plan, &search, &clock, FailurePolicy::BestEffort).unwrap();
        assert!(!evidence[0].ok);
        assert!(evidence[1].ok);

        let clock = Clock::new_virtual();
        assert!(matches!(
            execute_plan(&plan, &search, &clock, FailurePolicy::FailFast),
            Err(ScheduleError::QueryFailed { node, .. }) if node == "n0"
        ));
    }

    #[test]
    fn merge_is_deterministic_and_idempotent() {
        let g = exo_graph();
        let evidence = vec![
            Evidence {
                node: "metformin".into(),
                query: "q".into(),
                snippets: vec!["hazard ratio 0.86".into()],
                ok: true,
                latency: 1.0,
            },
            Evidence {
                node: "mace outcomes".into(),
                query: "q2".into(),
                snippets: vec![],
                ok: false,
                latency: 0.0,
            },
        ];
        let merged = merge_context("original context", &g, &evidence);
        assert!(merged.starts_with("original context"));
        assert!(merged.contains("Causal Structure:\n{\"nodes\""));
        assert!(merged.contains("- metformin: hazard ratio 0.86"));
        assert!(merged.contains("- mace outcomes: [unavailable]"));
        let twice = merge_context(&merged, &g, &evidence);
        assert_eq!(twice, merged);
    }

    #[test]
    fn merge_without_evidence_appends_graph_only() {
        let g = exo_graph();
        let merged = merge_context("ctx", &g, &[]);
        assert!(merged.contains("Causal Structure:"));
        assert!(!merged.contains("External Evidence:"));
    }

    #[test]
    fn merge_output_independent_of_completion_order() {
        // Same evidence list (plan order) regardless of how latencies
        // shuffle completion: merge only depends on plan order.
        let g = exo_graph();
        let make = |lat_a: f64, lat_b: f64| {
            let mut search = MockSearchBackend::new();
            let plan = three_query_plan(&[lat_a, lat_b], &mut search);
            let clock = Clock::new_virtual();
            let (evidence, _) =
                execute_plan(&plan, &search, &clock, FailurePolicy::BestEffort).unwrap();
            merge_context("ctx", &g, &evidence)
        };
        // Latencies swapped: q1 finishes first in one run, last in the
        // other. The merged text must not change shape.
        let a = make(2.0, 0.5);
        let b = make(0.5, 2.0);
        // Snippets are identical; only recorded latencies differ, and they
        // are not part of the merged context.
        assert_eq!(a, b);
    }

    #[test]
    fn simulation_matches_closed_form_in_both_modes() {
        let p = params(9.0, 1.0, &[2.0], 0.0, 0.5, 3);
        for mode in [ScheduleMode::Sequential, ScheduleMode::Proactive] {
            let clock = Clock::new_virtual();
            let run = simulate_pipeline(&p, mode, &clock).unwrap();
            assert!(
                (run.total - predict_latency(&p, mode)).abs() < 1e-9,
                "{mode:?}"
            );
        }
    }

    #[test]
    fn proactive_simulation_never_idles_generation() {
        let p = params(1.0, 0.5, &[2.0, 1.5, 1.8], 0.05, 0.45, 3);
        let clock = Clock::new_virtual();
        let run = simulate_pipeline(&p, ScheduleMode::Proactive, &clock).unwrap();
        run.trace.check_proactive().unwrap();
        assert_eq!(run.trace.idle_generation, 0.0);
        assert!((run.trace.idle_residual - 0.45).abs() < 1e-9);

        let clock = Clock::new_virtual();
        let seq = simulate_pipeline(&p, ScheduleMode::Sequential, &clock).unwrap();
        assert!(seq.trace.idle_generation > 0.0);
    }

    #[test]
    fn latency_params_file_round_trips() {
        let text = "t_parse=9\nt_gen=1\nt_web=2\nt_switch=0\nt_causal=0.5\nk=3\n";
        let p = parse_latency_params(text).unwrap();
        assert_eq!(p.k, 3);
        assert_eq!(p.t_web, vec![2.0]);
        let again = parse_latency_params(&render_latency_params(&p)).unwrap();
        assert_eq!(again, p);

        let multi = parse_latency_params("t_web=2.0, 1.5, 1.8\nk=3\nt_gen=1\n").unwrap();
        assert_eq!(multi.t_web.len(), 3);
        assert!(parse_latency_params("t_web=2\nk=2\nt_web=1,2,3").is_err());
        assert!(parse_latency_params("nope=1").is_err());
        assert!(parse_latency_params("t_gen=-1").is_err());
    }

    #[test]
    fn trace_events_export_one_line_per_event() {
        let p = params(1.0, 0.5, &[2.0], 0.0, 0.25, 2);
        let clock = Clock::new_virtual();
        let run = simulate_pipeline(&p, ScheduleMode::Proactive, &clock).unwrap();
        let rendered = run.trace.render_events();
        assert_eq!(rendered.lines().count(), 2 + 2 * 2 + 2);
        assert!(rendered.contains("gen_start"));
        assert!(rendered.contains("q1_complete"));
    }

    #[test]
    fn threaded_execution_smoke() {
        // Tiny real-time run: correctness of merge order and evidence,
        // no timing assertions.
        let mut search = MockSearchBackend::new();
        let plan = three_query_plan(&[0.0, 0.0, 0.0], &mut search);
        let clock = Clock::new_system();
        let (evidence, trace) =
            execute_plan(&plan, &search, &clock, FailurePolicy::BestEffort).unwrap();
        assert_eq!(evidence.len(), 3);
        assert_eq!(evidence[0].node, "n0");
        assert_eq!(trace.per_query.len(), 3);
        assert!(trace.per_query.iter().all(|q| q.dispatch <= q.complete));
    }
}
