//! Three-phase evaluation pipeline: generation (rate limited, resumable),
//! deterministic metric scoring, and paired statistics, plus report tables
//! and the dataset quality gate.
//!
//! Benchmark files and evaluation records are line-delimited JSON so runs
//! append and resume without rewriting. Scoring is a pure function of
//! (records, samples): rerunning yields identical metric output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, RateLimiter};
use crate::claims::ClaimExtractor;
use crate::clock::Clock;
use crate::graph::{parse_graph, serialize_graph, ParseMode};
use crate::metrics::{ccs_aggregate, score_response, KnowledgeGraph, MetricReport};
use crate::prompt::{self, PromptError, PromptKind, PromptSpec};
use crate::stats::{bonferroni_gate, cohens_d, paired_t_test, StatsError, StatsSummary};

pub const QUALITY_GATE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record references unknown sample `{0}`")]
    UnknownSample(String),
    #[error("causal and direct records do not pair by sample id")]
    UnpairedRecords,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("bad report table: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Medical,
    Legal,
    Financial,
    General,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Medical => "medical",
            Domain::Legal => "legal",
            Domain::Financial => "financial",
            Domain::General => "general",
        }
    }

    const ALL: [Domain; 4] = [
        Domain::Medical,
        Domain::Legal,
        Domain::Financial,
        Domain::General,
    ];

    /// Published benchmark composition targets.
    pub fn target_share(&self) -> f64 {
        match self {
            Domain::Medical => 0.35,
            Domain::Legal => 0.30,
            Domain::Financial => 0.20,
            Domain::General => 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSample {
    pub id: String,
    pub domain: Domain,
    pub context: String,
    pub query: String,
    pub reference_kg: KnowledgeGraph,
    /// Whitespace token count of the context.
    pub context_length: usize,
}

#[derive(Serialize, Deserialize)]
struct WireSample {
    id: String,
    domain: Domain,
    context: String,
    query: String,
    reference_kg: serde_json::Value,
}

/// Observed-vs-target composition of a loaded benchmark. Informational
/// only; drift is never an error.
#[derive(Debug, Clone, Default)]
pub struct DistributionReport {
    pub total: usize,
    pub domain_counts: BTreeMap<Domain, usize>,
    pub length_band_counts: BTreeMap<&'static str, usize>,
    pub empty: bool,
}

const LENGTH_BANDS: [(&str, usize, usize, f64); 3] = [
    ("4-8K", 4_000, 8_000, 0.40),
    ("8-12K", 8_000, 12_000, 0.35),
    ("12-16K", 12_000, 16_000, 0.25),
];

fn length_band(tokens: usize) -> &'static str {
    for (name, lo, hi, _) in LENGTH_BANDS {
        if tokens >= lo && tokens < hi {
            return name;
        }
    }
    if tokens < 4_000 {
        "under-4K"
    } else {
        "over-16K"
    }
}

impl fmt::Display for DistributionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.empty {
            writeln!(f, "warning: benchmark file contains no samples")?;
            return Ok(());
        }
        writeln!(f, "{} samples", self.total)?;
        writeln!(f, "domain distribution (observed vs target):")?;
        for domain in Domain::ALL {
            let count = self.domain_counts.get(&domain).copied().unwrap_or(0);
            let share = count as f64 / self.total as f64;
            writeln!(
                f,
                "  {:<10} {:>3}  {:>5.1}%  (target {:.0}%)",
                domain.as_str(),
                count,
                100.0 * share,
                100.0 * domain.target_share()
            )?;
        }
        writeln!(f, "context-length bands (observed vs target):")?;
        for (name, _, _, target) in LENGTH_BANDS {
            let count = self.length_band_counts.get(name).copied().unwrap_or(0);
            let share = count as f64 / self.total as f64;
            writeln!(
                f,
                "  {:<10} {:>3}  {:>5.1}%  (target {:.0}%)",
                name,
                count,
                100.0 * share,
                100.0 * target
            )?;
        }
        for name in ["under-4K", "over-16K"] {
            if let Some(count) = self.length_band_counts.get(name) {
                writeln!(f, "  {name:<10} {count:>3}  (outside target bands)")?;
            }
        }
        Ok(())
    }
}

fn sample_from_line(line: &str, line_no: usize) -> Result<BenchmarkSample, HarnessError> {
    let wire: WireSample =
        serde_json::from_str(line).map_err(|e| HarnessError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
    let kg_doc = wire.reference_kg.to_string();
    let graph = parse_graph(&kg_doc, ParseMode::Lenient).map_err(|e| {
        HarnessError::MalformedRecord {
            line: line_no,
            reason: format!("reference_kg: {e}"),
        }
    })?;
    let reference_kg = KnowledgeGraph::from_causal_graph(&graph);
    if reference_kg.is_empty() {
        return Err(HarnessError::MalformedRecord {
            line: line_no,
            reason: "reference_kg is empty".to_string(),
        });
    }
    let context_length = wire.context.split_whitespace().count();
    if context_length == 0 {
        return Err(HarnessError::MalformedRecord {
            line: line_no,
            reason: "context is empty".to_string(),
        });
    }
    Ok(BenchmarkSample {
        id: wire.id,
        domain: wire.domain,
        context: wire.context,
        query: wire.query,
        reference_kg,
        context_length,
    })
}

/// Serialize one sample to a benchmark line. The reference knowledge
/// graph is embedded in the graph interchange format.
pub fn render_benchmark_line(
    id: &str,
    domain: Domain,
    context: &str,
    query: &str,
    kg_interchange: &str,
) -> String {
    let wire = WireSample {
        id: id.to_string(),
        domain,
        context: context.to_string(),
        query: query.to_string(),
        reference_kg: serde_json::from_str(kg_interchange).expect("valid interchange document"),
    };
    serde_json::to_string(&wire).expect("sample serialization cannot fail")
}

/// Parse a line-delimited benchmark file.
pub fn parse_benchmark(text: &str) -> Result<(Vec<BenchmarkSample>, DistributionReport), HarnessError> {
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        samples.push(sample_from_line(line, idx + 1)?);
    }
    let mut report = DistributionReport {
        total: samples.len(),
        empty: samples.is_empty(),
        ..DistributionReport::default()
    };
    for s in &samples {
        *report.domain_counts.entry(s.domain).or_insert(0) += 1;
        *report
            .length_band_counts
            .entry(length_band(s.context_length))
            .or_insert(0) += 1;
    }
    Ok((samples, report))
}

pub fn load_benchmark(
    path: &Path,
) -> Result<(Vec<BenchmarkSample>, DistributionReport), HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_benchmark(&text)
}

/// Generation-run configuration; defaults follow the published protocol
/// (seed 42, temperature 0.1, 4096 max tokens, 20 requests per minute).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model_id: String,
    pub seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub rate_limit_per_min: usize,
    pub max_path_len: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_id: "mock-model".to_string(),
            seed: 42,
            temperature: crate::backend::DEFAULT_TEMPERATURE,
            max_tokens: crate::backend::DEFAULT_MAX_TOKENS,
            rate_limit_per_min: crate::backend::DEFAULT_RATE_LIMIT_PER_MIN,
            max_path_len: crate::metrics::DEFAULT_MAX_PATH_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub prompt_kind: PromptKind,
    pub response: String,
    pub metrics: Option<MetricReport>,
    /// Set when the response produced no extractable claims; AR is
    /// recorded as zero so aggregates stay defined.
    #[serde(default)]
    pub empty_claims: bool,
    #[serde(default)]
    pub error: Option<String>,
    pub wall_latency_s: f64,
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::MalformedRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Render the prompt for one (sample, kind) pair. The causal kind runs
/// the rule-based extractor over the context and injects the serialized
/// graph; the retrieval kind substitutes ranked chunks.
pub fn build_prompt(
    sample: &BenchmarkSample,
    kind: PromptKind,
    extractor: &ClaimExtractor,
) -> Result<String, HarnessError> {
    let spec = match kind {
        PromptKind::Direct => PromptSpec::direct(&sample.query, &sample.context),
        PromptKind::Cot => PromptSpec::cot(&sample.query, &sample.context),
        PromptKind::Causal => {
            let claims = extractor.segment_claims(&sample.context);
            let graph = crate::claims::to_causal_graph(&claims)
                .expect("extracted claims form a valid graph");
            PromptSpec::causal(&sample.query, &sample.context, serialize_graph(&graph))
        }
        PromptKind::Rag => {
            let chunks = prompt::rank_chunks(&sample.context, &sample.query);
            PromptSpec::rag(&sample.query, &sample.context, chunks)
        }
    };
    Ok(prompt::render(&spec)?)
}

#[derive(Debug, Clone, Default)]
pub struct GenerationOutcome {
    pub records: Vec<EvalRecord>,
    pub generated: usize,
    pub skipped: usize,
}

/// Generation phase: one response per (sample, kind), rate limited,
/// persisted incrementally when `out_path` is given, and resumable —
/// existing (sample, kind) records are skipped. Per-sample backend
/// failures are recorded and the run continues.
pub fn run_generation(
    cfg: &RunConfig,
    samples: &[BenchmarkSample],
    kinds: &[PromptKind],
    backend: &dyn ChatBackend,
    clock: &Clock,
    out_path: Option<&Path>,
) -> Result<GenerationOutcome, HarnessError> {
    let limiter = RateLimiter::new(cfg.rate_limit_per_min.max(1), clock.clone());
    let extractor = ClaimExtractor::default();

    let mut outcome = GenerationOutcome::default();
    let mut existing: BTreeSet<(String, PromptKind)> = BTreeSet::new();
    if let Some(path) = out_path {
        for record in load_records(path)? {
            existing.insert((record.sample_id.clone(), record.prompt_kind));
            outcome.records.push(record);
        }
    }
    let mut out_file = match out_path {
        Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
        None => None,
    };

    for sample in samples {
        for kind in kinds {
            if existing.contains(&(sample.id.clone(), *kind)) {
                outcome.skipped += 1;
                continue;
            }
            let prompt_text = build_prompt(sample, *kind, &extractor)?;
            let mut request = ChatRequest::new(&cfg.model_id, prompt_text);
            request.temperature = cfg.temperature;
            request.max_tokens = cfg.max_tokens;
            request.seed = Some(cfg.seed);

            limiter.acquire();
            let start = clock.now();
            let (response, error) = match backend.chat(&request) {
                Ok(resp) => (resp.text, None),
                Err(err @ BackendError::ScriptMiss(_)) => (String::new(), Some(err.to_string())),
                Err(err) => (String::new(), Some(err.to_string())),
            };
            let record = EvalRecord {
                sample_id: sample.id.clone(),
                prompt_kind: *kind,
                response,
                metrics: None,
                empty_claims: false,
                error,
                wall_latency_s: clock.now() - start,
            };
            if let Some(file) = out_file.as_mut() {
                writeln!(
                    file,
                    "{}",
                    serde_json::to_string(&record).expect("record serialization cannot fail")
                )?;
            }
            outcome.records.push(record);
            outcome.generated += 1;
        }
    }
    Ok(outcome)
}

/// Metric-calculation phase: deterministic, no model in the loop. Empty
/// responses get a flagged zero-AR report.
pub fn run_scoring(
    records: &[EvalRecord],
    samples: &[BenchmarkSample],
    max_path_len: usize,
) -> Result<Vec<EvalRecord>, HarnessError> {
    let by_id: BTreeMap<&str, &BenchmarkSample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let extractor = ClaimExtractor::default();
    let mut scored = Vec::with_capacity(records.len());
    for record in records {
        let sample = by_id
            .get(record.sample_id.as_str())
            .ok_or_else(|| HarnessError::UnknownSample(record.sample_id.clone()))?;
        let claims = extractor.segment_claims(&record.response);
        let mut out = record.clone();
        if claims.claims.is_empty() {
            out.metrics = Some(MetricReport {
                ar: 0.0,
                attributable_count_raw: 0,
                n_claims: 0,
                ccs: 1,
                eid_proxy: 0.0,
            });
            out.empty_claims = true;
        } else {
            out.metrics = Some(
                score_response(&claims, &sample.reference_kg, max_path_len)
                    .expect("non-empty claims with non-zero tokens"),
            );
            out.empty_claims = false;
        }
        scored.push(out);
    }
    Ok(scored)
}

fn metric_value(record: &EvalRecord, metric: &str) -> f64 {
    let Some(m) = &record.metrics else { return 0.0 };
    match metric {
        "ar" => m.ar,
        "ccs" => f64::from(m.ccs),
        "eid" => m.eid_proxy,
        "n_claims" => m.n_claims as f64,
        _ => 0.0,
    }
}

/// Degenerate-variance limit convention: unanimous zero difference is
/// maximal insignificance, unanimous nonzero difference maximal
/// significance.
fn degenerate_t(mean: f64) -> (f64, f64) {
    if mean == 0.0 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY.copysign(mean), 0.0)
    }
}

/// Statistical-analysis phase: pair causal and direct records by sample
/// id and summarize each metric (ar, ccs, eid).
pub fn run_stats(
    causal: &[EvalRecord],
    direct: &[EvalRecord],
    m_comparisons: usize,
    alpha: f64,
) -> Result<BTreeMap<String, StatsSummary>, HarnessError> {
    let causal_by_id: BTreeMap<&str, &EvalRecord> =
        causal.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let direct_by_id: BTreeMap<&str, &EvalRecord> =
        direct.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    if causal_by_id.len() != direct_by_id.len()
        || causal_by_id.len() < 2
        || causal_by_id
            .keys()
            .any(|id| !direct_by_id.contains_key(id))
    {
        return Err(HarnessError::UnpairedRecords);
    }

    let mut summaries = BTreeMap::new();
    for metric in ["ar", "ccs", "eid"] {
        let mut diffs = Vec::with_capacity(causal_by_id.len());
        let mut group_causal = Vec::with_capacity(causal_by_id.len());
        let mut group_direct = Vec::with_capacity(causal_by_id.len());
        for (id, c) in &causal_by_id {
            let d = direct_by_id[id];
            let (vc, vd) = (metric_value(c, metric), metric_value(d, metric));
            diffs.push(vc - vd);
            group_causal.push(vc);
            group_direct.push(vd);
        }
        let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let (t_stat, p_value) = match paired_t_test(&diffs) {
            Ok(result) => (result.t_stat, result.p_value),
            Err(StatsError::DegenerateVariance) => degenerate_t(mean_diff),
        };
        let d = match cohens_d(&group_causal, &group_direct) {
            Ok(d) => d,
            Err(StatsError::DegenerateVariance) => f64::INFINITY.copysign(mean_diff),
        };
        summaries.insert(
            metric.to_string(),
            StatsSummary {
                mean_diff,
                t_stat,
                p_value,
                cohens_d: d,
                significant_after_bonferroni: bonferroni_gate(p_value, m_comparisons, alpha),
                m_comparisons,
            },
        );
    }
    Ok(summaries)
}

/// Record plus the three dataset-quality scores.
#[derive(Debug, Clone)]
pub struct ScoredRecord {
    pub record: EvalRecord,
    pub causal_score: f64,
    pub semantic_score: f64,
    pub structural_score: f64,
}

/// Quality gate: retain iff causal > threshold and semantic > threshold
/// (strict inequalities). The structural score is reported but not gated.
pub fn filter_dataset(
    records: Vec<ScoredRecord>,
    threshold: f64,
) -> Result<Vec<ScoredRecord>, HarnessError> {
    for r in &records {
        for score in [r.causal_score, r.semantic_score, r.structural_score] {
            if !(0.0..=1.0).contains(&score) {
                return Err(HarnessError::ScoreOutOfRange(score));
            }
        }
    }
    Ok(records
        .into_iter()
        .filter(|r| r.causal_score > threshold && r.semantic_score > threshold)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityRow {
    pub model: String,
    pub causal_ac: f64,
    pub direct_ac: f64,
    pub causal_ccs: f64,
    pub direct_ccs: f64,
    pub cohens_d_ar: f64,
    pub cohens_d_ccs: f64,
    pub p_value: f64,
    pub delta_ac: f64,
    pub delta_ccs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub model: String,
    pub sequential: f64,
    pub parallel: f64,
    pub speedup_pct: f64,
    pub idle: f64,
}

const QUALITY_HEADER: &str = "Model,Causal AC,Direct AC,Causal CCS,Direct CCS,Cohen's d (AR),Cohen's d (CCS),p-value,Delta AC,Delta CCS";
const LATENCY_HEADER: &str = "Model,Sequential,Parallel,Speedup,Idle";

/// Build the quality row for one model from its scored causal and direct
/// records. AC = mean AR x mean claims per response.
pub fn summarize_quality(
    model: &str,
    causal: &[EvalRecord],
    direct: &[EvalRecord],
    stats: &BTreeMap<String, StatsSummary>,
) -> QualityRow {
    let mean = |records: &[EvalRecord], metric: &str| -> f64 {
        if records.is_empty() {
            return 0.0;
        }
        records.iter().map(|r| metric_value(r, metric)).sum::<f64>() / records.len() as f64
    };
    let ac = |records: &[EvalRecord]| -> f64 {
        crate::metrics::attributable_count(mean(records, "ar"), mean(records, "n_claims"))
    };
    let causal_ccs = ccs_aggregate(
        &causal
            .iter()
            .map(|r| r.metrics.as_ref().map(|m| m.ccs).unwrap_or(0))
            .collect::<Vec<u8>>(),
    )
    .unwrap_or(0.0);
    let direct_ccs = ccs_aggregate(
        &direct
            .iter()
            .map(|r| r.metrics.as_ref().map(|m| m.ccs).unwrap_or(0))
            .collect::<Vec<u8>>(),
    )
    .unwrap_or(0.0);
    let causal_ac = ac(causal);
    let direct_ac = ac(direct);
    QualityRow {
        model: model.to_string(),
        causal_ac,
        direct_ac,
        causal_ccs,
        direct_ccs,
        cohens_d_ar: stats.get("ar").map(|s| s.cohens_d).unwrap_or(f64::NAN),
        cohens_d_ccs: stats.get("ccs").map(|s| s.cohens_d).unwrap_or(f64::NAN),
        p_value: stats.get("ar").map(|s| s.p_value).unwrap_or(f64::NAN),
        delta_ac: causal_ac - direct_ac,
        delta_ccs: causal_ccs - direct_ccs,
    }
}

pub fn render_quality_table(rows: &[QualityRow]) -> String {
    let mut out = String::from(QUALITY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.model,
            r.causal_ac,
            r.direct_ac,
            r.causal_ccs,
            r.direct_ccs,
            r.cohens_d_ar,
            r.cohens_d_ccs,
            r.p_value,
            r.delta_ac,
            r.delta_ccs
        ));
    }
    out
}

pub fn parse_quality_table(text: &str) -> Result<Vec<QualityRow>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == QUALITY_HEADER => {}
        other => {
            return Err(HarnessError::Report(format!(
                "unexpected header {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(HarnessError::Report(format!(
                "expected 10 columns, got {}",
                cols.len()
            )));
        }
        let num = |i: usize| -> Result<f64, HarnessError> {
            cols[i]
                .parse()
                .map_err(|_| HarnessError::Report(format!("bad number `{}`", cols[i])))
        };
        rows.push(QualityRow {
            model: cols[0].to_string(),
            causal_ac: num(1)?,
            direct_ac: num(2)?,
            causal_ccs: num(3)?,
            direct_ccs: num(4)?,
            cohens_d_ar: num(5)?,
            cohens_d_ccs: num(6)?,
            p_value: num(7)?,
            delta_ac: num(8)?,
            delta_ccs: num(9)?,
        });
    }
    Ok(rows)
}

pub fn render_latency_table(rows: &[LatencyRow]) -> String {
    let mut out = String::from(LATENCY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model, r.sequential, r.parallel, r.speedup_pct, r.idle
        ));
    }
    out
}

pub fn parse_latency_table(text: &str) -> Result<Vec<LatencyRow>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == LATENCY_HEADER => {}
        other => {
            return Err(HarnessError::Report(format!(
                "unexpected header {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(HarnessError::Report(format!(
                "expected 5 columns, got {}",
                cols.len()
            )));
        }
        let num = |i: usize| -> Result<f64, HarnessError> {
            cols[i]
                .parse()
                .map_err(|_| HarnessError::Report(format!("bad number `{}`", cols[i])))
        };
        rows.push(LatencyRow {
            model: cols[0].to_string(),
            sequential: num(1)?,
            parallel: num(2)?,
            speedup_pct: num(3)?,
            idle: num(4)?,
        });
    }
    Ok(rows)
}

/// Full mock-or-live bench for one model over the given prompt kinds:
/// generation, scoring, statistics, and the quality row.
pub struct BenchOutcome {
    pub records: Vec<EvalRecord>,
    pub stats: BTreeMap<String, StatsSummary>,
    pub quality: QualityRow,
}

pub fn run_bench(
    cfg: &RunConfig,
    samples: &[BenchmarkSample],
    kinds: &[PromptKind],
    backend: &dyn ChatBackend,
    clock: &Clock,
    records_path: Option<&Path>,
) -> Result<BenchOutcome, HarnessError> {
    let generation = run_generation(cfg, samples, kinds, backend, clock, records_path)?;
    let records = run_scoring(&generation.records, samples, cfg.max_path_len)?;
    let causal: Vec<EvalRecord> = records
        .iter()
        .filter(|r| r.prompt_kind == PromptKind::Causal)
        .cloned()
        .collect();
    let direct: Vec<EvalRecord> = records
        .iter()
        .filter(|r| r.prompt_kind == PromptKind::Direct)
        .cloned()
        .collect();
    let stats = if !causal.is_empty() && !direct.is_empty() {
        run_stats(
            &causal,
            &direct,
            crate::stats::DEFAULT_COMPARISONS,
            crate::stats::DEFAULT_ALPHA,
        )?
    } else {
        BTreeMap::new()
    };
    let quality = summarize_quality(&cfg.model_id, &causal, &direct, &stats);
    Ok(BenchOutcome {
        records,
        stats,
        quality,
    })
}
