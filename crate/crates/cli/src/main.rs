//! Command-line interface: graph extraction, response scoring, retrieval
//! planning, latency simulation, the full evaluation bench, the SCM
//! theory checks, and report emission.
//!
//! Exit codes: 0 on success, 2 on validation failure (malformed inputs,
//! out-of-range values), 1 on runtime errors and failed theory checks.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use causal_prompt::backend::{
    parse_config, BackendError, ChatBackend, LiveChatBackend, MockChatBackend,
};
use causal_prompt::claims::{to_causal_graph, CausalLexicon, ClaimError, ClaimExtractor};
use causal_prompt::clock::Clock;
use causal_prompt::graph::{classify_nodes, parse_graph, serialize_graph, GraphError, ParseMode};
use causal_prompt::harness::{
    load_benchmark, load_records, parse_latency_table, parse_quality_table, render_latency_table,
    render_quality_table, run_bench, run_scoring, run_stats, summarize_quality, HarnessError,
    LatencyRow, RunConfig,
};
use causal_prompt::metrics::{
    attributable_rate, ccs_aggregate, ccs_response, eid_proxy, KnowledgeGraph,
};
use causal_prompt::prompt::PromptKind;
use causal_prompt::schedule::{
    calibrate_from_pair, parse_latency_params, predict_latency, simulate_pipeline, speedup,
    ScheduleError, ScheduleMode,
};
use causal_prompt::scm::{render_matrix, run_theory_suite, ScmError};

#[derive(Parser)]
#[command(
    name = "causal-prompt",
    version,
    about = "Causal-graph prompting, proactive retrieval scheduling, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a causal graph from text and print the interchange JSON.
    Extract {
        /// Input text file; `-` reads stdin.
        #[arg(long, default_value = "-")]
        input: String,
        /// Causal-connective lexicon file (one pattern per line).
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Score responses against a knowledge graph and print metrics.
    Score {
        /// Line-delimited JSON: {"id": ..., "response": ...}.
        #[arg(long)]
        responses: PathBuf,
        /// Knowledge graph in the interchange format.
        #[arg(long)]
        kg: PathBuf,
        #[arg(long, default_value_t = causal_prompt::metrics::DEFAULT_MAX_PATH_LEN)]
        max_path_len: usize,
    },
    /// Dry-run the retrieval plan for a graph.
    Plan {
        /// Causal graph in the interchange format.
        #[arg(long)]
        graph: PathBuf,
        /// Fact index used to classify nodes; omitted means every node is
        /// exogenous.
        #[arg(long)]
        kg: Option<PathBuf>,
        #[arg(long)]
        query: String,
    },
    /// Predict and simulate pipeline latency.
    Simulate {
        /// key=value latency parameters (t_parse, t_gen, t_web, t_switch,
        /// t_causal, k).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Measured pairs, one `name sequential parallel` row per line;
        /// each is calibrated and re-simulated.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Directory for the latency table (written as latency.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the generation -> scoring -> statistics pipeline.
    Bench {
        /// Benchmark file (line-delimited samples).
        #[arg(long)]
        benchmark: PathBuf,
        /// Mock chat script (key<TAB>response per line).
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Backend config (key=value; credential read from env).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Prompt conditions to run (repeatable).
        #[arg(long = "mode", value_parser = parse_prompt_kind)]
        modes: Vec<PromptKind>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for records.jsonl and quality.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the structural-causal-model theory checks.
    Scm {
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        /// Base seed for instance generation.
        #[arg(long, default_value_t = 0xC1A0)]
        seed: u64,
        /// Write the pass/fail matrix to this file as well as stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Re-score persisted records and emit the quality table.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
        /// Model label for the table row.
        #[arg(long, default_value = "model")]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_prompt_kind(s: &str) -> Result<PromptKind, String> {
    PromptKind::parse(s).ok_or_else(|| format!("unknown mode `{s}` (direct|causal|cot|rag)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Validation failures exit 2; runtime failures exit 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<GraphError>()
            || cause.is::<ClaimError>()
            || cause.is::<ScheduleError>()
            || cause
                .downcast_ref::<BackendError>()
                .is_some_and(|e| matches!(e, BackendError::Config(_)))
            || cause.downcast_ref::<HarnessError>().is_some_and(|e| {
                matches!(
                    e,
                    HarnessError::MalformedRecord { .. }
                        | HarnessError::ScoreOutOfRange(_)
                        | HarnessError::Report(_)
                        | HarnessError::UnknownSample(_)
                        | HarnessError::UnpairedRecords
                )
            })
            || cause
                .downcast_ref::<ScmError>()
                .is_some_and(|e| matches!(e, ScmError::Format(_) | ScmError::Invalid(_)))
        {
            return 2;
        }
    }
    1
}

fn read_input(input: &str) -> Result<String> {
    if input == "-" {
        let mut buf = String::new();
        std::io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        std::fs::read_to_string(input).with_context(|| format!("reading {input}"))
    }
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let graph = parse_graph(&text, ParseMode::Lenient)?;
    Ok(KnowledgeGraph::from_causal_graph(&graph))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Extract { input, lexicon } => {
            let text = read_input(&input)?;
            let extractor = match lexicon {
                Some(path) => {
                    let lexicon_text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    ClaimExtractor::new(CausalLexicon::parse(&lexicon_text)?)
                }
                None => ClaimExtractor::default(),
            };
            let claims = extractor.segment_claims(&text);
            let graph = to_causal_graph(&claims)?;
            println!("{}", serialize_graph(&graph));
            Ok(ExitCode::SUCCESS)
        }

        Command::Score {
            responses,
            kg,
            max_path_len,
        } => {
            let kg = load_kg(&kg)?;
            let text = std::fs::read_to_string(&responses)
                .with_context(|| format!("reading {}", responses.display()))?;
            let extractor = ClaimExtractor::default();

            #[derive(serde::Deserialize)]
            struct ResponseLine {
                id: String,
                response: String,
            }

            let mut ars = Vec::new();
            let mut ccss = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: ResponseLine = serde_json::from_str(line).map_err(|e| {
                    anyhow::Error::from(HarnessError::MalformedRecord {
                        line: idx + 1,
                        reason: e.to_string(),
                    })
                })?;
                let claims = extractor.segment_claims(&parsed.response);
                let (ar, raw, ccs, eid, empty) = if claims.claims.is_empty() {
                    (0.0, 0, 1u8, 0.0, true)
                } else {
                    let (ar, raw) = attributable_rate(&claims, &kg, max_path_len)
                        .expect("claims are non-empty");
                    let ccs = ccs_response(&claims);
                    let eid = eid_proxy(raw, claims.source_token_count)
                        .expect("non-empty text has tokens");
                    (ar, raw, ccs, eid, false)
                };
                ars.push(ar);
                ccss.push(ccs);
                println!(
                    "{}",
                    serde_json::json!({
                        "id": parsed.id,
                        "ar": ar,
                        "attributable_count_raw": raw,
                        "n_claims": claims.claims.len(),
                        "ccs": ccs,
                        "eid_proxy": eid,
                        "empty_claims": empty,
                    })
                );
            }
            if ars.is_empty() {
                eprintln!("warning: no responses scored");
            } else {
                let mean_ar = ars.iter().sum::<f64>() / ars.len() as f64;
                eprintln!(
                    "scored {} responses: mean AR {:.4}, CCS {:.4}",
                    ars.len(),
                    mean_ar,
                    ccs_aggregate(&ccss).expect("non-empty"),
                );
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Plan { graph, kg, query } => {
            let text = std::fs::read_to_string(&graph)
                .with_context(|| format!("reading {}", graph.display()))?;
            let parsed = parse_graph(&text, ParseMode::Lenient)?;
            let fact_index = match kg {
                Some(path) => load_kg(&path)?,
                None => KnowledgeGraph::new(),
            };
            let classified = classify_nodes(&parsed, &fact_index);
            let plan = causal_prompt::schedule::plan_retrieval(&classified, &query);
            if plan.is_empty() {
                eprintln!("no exogenous nodes; nothing to retrieve");
            }
            for planned in &plan.queries {
                println!(
                    "{}",
                    serde_json::json!({"node": planned.node, "query": planned.query})
                );
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Simulate { params, pairs, out } => {
            if params.is_none() && pairs.is_none() {
                return Err(anyhow!(ScheduleError::Params(
                    "simulate needs --params or --pairs".to_string()
                )));
            }
            if let Some(path) = params {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let params = parse_latency_params(&text)?;
                let predicted_seq = predict_latency(&params, ScheduleMode::Sequential);
                let predicted_pro = predict_latency(&params, ScheduleMode::Proactive);
                let seq =
                    simulate_pipeline(&params, ScheduleMode::Sequential, &Clock::new_virtual())?;
                let pro =
                    simulate_pipeline(&params, ScheduleMode::Proactive, &Clock::new_virtual())?;
                println!(
                    "sequential: predicted {predicted_seq:.4}s, simulated {:.4}s",
                    seq.total
                );
                println!(
                    "proactive:  predicted {predicted_pro:.4}s, simulated {:.4}s",
                    pro.total
                );
                println!(
                    "speedup: {:.4} ({:.1}% faster)",
                    speedup(&params)?,
                    100.0 * (seq.total - pro.total) / seq.total
                );
                println!(
                    "idle: generation {:.2}s, residual {:.2}s",
                    pro.trace.idle_generation, pro.trace.idle_residual
                );
            }
            if let Some(path) = pairs {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let mut rows = Vec::new();
                for (idx, raw) in text.lines().enumerate() {
                    let line = raw.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() != 3 {
                        return Err(anyhow!(ScheduleError::Params(format!(
                            "pairs line {}: expected `name sequential parallel`",
                            idx + 1
                        ))));
                    }
                    let seq_s: f64 = fields[1].parse().map_err(|_| {
                        ScheduleError::Params(format!("pairs line {}: bad number", idx + 1))
                    })?;
                    let par_s: f64 = fields[2].parse().map_err(|_| {
                        ScheduleError::Params(format!("pairs line {}: bad number", idx + 1))
                    })?;
                    let params = calibrate_from_pair(seq_s, par_s)?;
                    let seq = simulate_pipeline(
                        &params,
                        ScheduleMode::Sequential,
                        &Clock::new_virtual(),
                    )?;
                    let pro = simulate_pipeline(
                        &params,
                        ScheduleMode::Proactive,
                        &Clock::new_virtual(),
                    )?;
                    rows.push(LatencyRow {
                        model: fields[0].to_string(),
                        sequential: seq.total,
                        parallel: pro.total,
                        speedup_pct: 100.0 * (seq.total - pro.total) / seq.total,
                        idle: pro.trace.idle_residual,
                    });
                }
                let table = render_latency_table(&rows);
                print!("{table}");
                if !rows.is_empty() {
                    let avg = rows.iter().map(|r| r.speedup_pct).sum::<f64>() / rows.len() as f64;
                    eprintln!("average speedup {avg:.1}%");
                }
                if let Some(dir) = out {
                    std::fs::create_dir_all(&dir)?;
                    let path = dir.join("latency.csv");
                    std::fs::write(&path, &table)?;
                    parse_latency_table(&table).expect("emitted table parses back");
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Bench {
            benchmark,
            mock_script,
            config,
            modes,
            seed,
            out,
        } => {
            let (samples, distribution) = load_benchmark(&benchmark)?;
            eprint!("{distribution}");

            let mut run_config = RunConfig {
                seed,
                ..RunConfig::default()
            };
            if let Some(config_path) = &config {
                let text = std::fs::read_to_string(config_path)?;
                let parsed = parse_config(&text)?;
                if !parsed.model_id.is_empty() {
                    run_config.model_id = parsed.model_id.clone();
                }
                run_config.temperature = parsed.temperature;
                run_config.max_tokens = parsed.max_tokens;
                run_config.rate_limit_per_min = parsed.rate_limit_per_min;
            }
            let backend: Box<dyn ChatBackend> = match (&mock_script, &config) {
                (Some(script_path), _) => {
                    let mut mock = MockChatBackend::strict();
                    let text = std::fs::read_to_string(script_path)
                        .with_context(|| format!("reading {}", script_path.display()))?;
                    mock.load_script(&text)?;
                    Box::new(mock)
                }
                (None, Some(config_path)) => {
                    let text = std::fs::read_to_string(config_path)?;
                    Box::new(LiveChatBackend::from_config(parse_config(&text)?)?)
                }
                (None, None) => {
                    return Err(anyhow!(BackendError::Config(
                        "bench needs --mock-script or a --config with a live endpoint".to_string()
                    )))
                }
            };

            let kinds = if modes.is_empty() {
                vec![PromptKind::Direct, PromptKind::Causal]
            } else {
                modes
            };
            // Mock scripts run on virtual time so rate limiting costs
            // nothing real; a live endpoint runs on the wall clock.
            let clock = if mock_script.is_some() {
                Clock::new_virtual()
            } else {
                Clock::new_system()
            };

            let records_path = out.as_ref().map(|dir| dir.join("records.jsonl"));
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
            }
            let outcome = run_bench(
                &run_config,
                &samples,
                &kinds,
                backend.as_ref(),
                &clock,
                records_path.as_deref(),
            )?;

            let table = render_quality_table(std::slice::from_ref(&outcome.quality));
            print!("{table}");
            for (metric, summary) in &outcome.stats {
                eprintln!(
                    "{metric}: mean diff {:+.4}, t {:.3}, p {:.3e}, d {:.3}, significant(bonferroni m={}): {}",
                    summary.mean_diff,
                    summary.t_stat,
                    summary.p_value,
                    summary.cohens_d,
                    summary.m_comparisons,
                    summary.significant_after_bonferroni
                );
            }
            if let Some(dir) = &out {
                let path = dir.join("quality.csv");
                std::fs::write(&path, &table)?;
                parse_quality_table(&table).expect("emitted table parses back");
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Scm {
            seeds,
            seed,
            report,
        } => {
            let suite = run_theory_suite(seeds, seed)?;
            let matrix = render_matrix(&suite);
            print!("{matrix}");
            if let Some(path) = report {
                std::fs::write(&path, &matrix)?;
            }
            if suite.all_ok() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("theory checks failed");
                Ok(ExitCode::FAILURE)
            }
        }

        Command::Report {
            records,
            benchmark,
            model,
            out,
        } => {
            let (samples, _) = load_benchmark(&benchmark)?;
            let loaded = load_records(&records)?;
            let scored = run_scoring(&loaded, &samples, RunConfig::default().max_path_len)?;
            let causal: Vec<_> = scored
                .iter()
                .filter(|r| r.prompt_kind == PromptKind::Causal)
                .cloned()
                .collect();
            let direct: Vec<_> = scored
                .iter()
                .filter(|r| r.prompt_kind == PromptKind::Direct)
                .cloned()
                .collect();
            let stats = if causal.len() >= 2 && direct.len() >= 2 {
                run_stats(
                    &causal,
                    &direct,
                    causal_prompt::stats::DEFAULT_COMPARISONS,
                    causal_prompt::stats::DEFAULT_ALPHA,
                )?
            } else {
                BTreeMap::new()
            };
            let quality = summarize_quality(&model, &causal, &direct, &stats);
            let table = render_quality_table(&[quality]);
            print!("{table}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("quality.csv");
                std::fs::write(&path, &table)?;
                eprintln!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
