//! Causal prompting engine and evaluation harness.
//!
//! Converts noisy long-context input into a typed causal graph, renders it
//! into prompts, schedules external retrieval proactively and in parallel
//! before generation, scores model output for factual attribution and
//! causal consistency, and verifies the underlying robustness theory
//! exactly on finite structural causal models.
//!
//! Module map:
//!
//! - [`graph`]: causal graph types, the JSON interchange format, cycle
//!   detection, topological ordering, endogenous/exogenous classification.
//! - [`claims`]: rule-based segmentation of text into subject/relation/
//!   object claims with a three-way relation taxonomy.
//! - [`metrics`]: knowledge-graph attribution (AR), causal consistency
//!   (CCS), attributable count, and the information-density proxy.
//! - [`stats`]: paired t-test, Cohen's d, Bonferroni gate.
//! - [`prompt`]: byte-exact prompt templates for the four conditions.
//! - [`backend`]: chat/search clients, deterministic mocks, rate limiter.
//! - [`clock`]: virtual and system time.
//! - [`schedule`]: proactive retrieval planning, parallel dispatch,
//!   context merging, and the analytic latency model.
//! - [`harness`]: benchmark loading, the three-phase evaluation pipeline,
//!   and report tables.
//! - [`scm`]: exact finite-SCM verification of the robustness theory.

pub mod backend;
pub mod claims;
pub mod clock;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod prompt;
pub mod schedule;
pub mod scm;
pub mod stats;
pub mod text;

pub use backend::{ChatBackend, ChatRequest, ChatResponse, RateLimiter, SearchBackend};
pub use claims::{Claim, ClaimExtractor, ClaimSet};
pub use clock::Clock;
pub use graph::{
    detect_cycles, parse_graph, serialize_graph, topological_order, CausalGraph, ParseMode,
    RelationKind,
};
pub use metrics::{attributable_rate, ccs_response, KnowledgeGraph, MetricReport};
pub use prompt::{PromptKind, PromptSpec};
pub use schedule::{
    execute_plan, merge_context, plan_retrieval, predict_latency, simulate_pipeline, speedup,
    LatencyParams, RetrievalPlan, ScheduleMode, ScheduleTrace,
};
pub use scm::{DiscreteScm, Witness};
