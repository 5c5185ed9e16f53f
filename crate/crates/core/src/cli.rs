//! Command-line front end. Every command is a pure function of its config,
//! seed and input files; reports are JSON and always record the seed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::synth::{generate_corpus, random_fact, render_query, SynthConfig};
use crate::corpus::{
    class_distribution, inject_cross_meeting, inject_query, parse_jsonl_corpus, parse_textgrid, schedule_injections,
    segment, verify_splits, SplitAssignment, Transcript,
};
use crate::evalkit::{
    apply_map, correlations, model_means, parse_scores, pareto_frontier, pava_fit, weight_sensitivity, IsotonicMap,
    ParetoPoint, EQUAL_WEIGHTS,
};
use crate::orchestrator::{
    generate_suite, latency_stats, run_ablation, run_suite, BackendTiming, Engine, GateConfig, Mode, RemoteBackend,
    ScenarioSuite, SuiteKind, Toolbox,
};
use crate::policy::{
    collect_replay, emit_replay, init_tool_head, parse_replay, train_cql, CqlConfig, EpsilonGreedy, LabelPolicy,
    LearnedPolicy, Policy, RewardSpec, RouterWithRules,
};
use crate::router::{
    derive_labels, forward, init_router, load_weights, save_weights, train_supervised, FeatureExtractor,
    FeatureVector, HashedNgrams, TrainConfig, DEFAULT_DIM,
};
use crate::taxonomy::{route_label, Cd, ClassDistribution, ClassMapping, RoutingAction};
use crate::tools::{hybrid_search, load_documents, RetrievalIndex};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input, missing file or unparsable data; exit code 2.
    #[error("{0}")]
    Input(String),
}

/// Human-readable progress line, silenced by `--quiet`.
macro_rules! say {
    ($ctx:expr, $($arg:tt)*) => {
        if !$ctx.quiet {
            println!($($arg)*);
        }
    };
}

macro_rules! input_err {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_err!(
    std::io::Error,
    serde_json::Error,
    crate::corpus::CorpusError,
    crate::evalkit::EvalError,
    crate::orchestrator::OrchestratorError,
    crate::policy::PolicyError,
    crate::router::RouterError,
    crate::taxonomy::TaxonomyError,
    crate::tools::ToolError
);

/// Settings shared by all commands. Flags override these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    /// Extra knowledge-base documents added to the suite's.
    pub kb: Option<PathBuf>,
    /// Extra web fixtures added to the suite's.
    pub fixtures: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub class_mapping: Option<PathBuf>,
    /// Suite kind (`simple`, `complex`, `mixed`) or a suite JSONL path.
    pub suite: Option<String>,
    pub suite_size: usize,
    pub gate: GateConfig,
    pub reward: RewardSpec,
    pub timing: BackendTiming,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            corpus: None,
            splits: None,
            kb: None,
            fixtures: None,
            weights: None,
            replay: None,
            scores: None,
            class_mapping: None,
            suite: None,
            suite_size: 300,
            gate: GateConfig::default(),
            reward: RewardSpec::default(),
            timing: BackendTiming::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let paths = [
            &self.corpus,
            &self.splits,
            &self.kb,
            &self.fixtures,
            &self.weights,
            &self.replay,
            &self.scores,
            &self.class_mapping,
        ];
        if let Some(p) = paths.into_iter().flatten().find(|p| !p.exists()) {
            return Err(CliError::Input(format!("config path does not exist: {}", p.display())));
        }
        if self.suite_size == 0 {
            return Err(CliError::Input("suite_size must be at least 1".into()));
        }
        self.gate.validate()?;
        self.reward.validate()?;
        if !self.timing.validate() {
            return Err(CliError::Input("invalid backend timing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualpilot", version, about = "Dual-lane meeting agent toolkit")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; falls back to the config, then DUALPILOT_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or directory for commands that write several files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// routing-only, tools-only, serial or parallel.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Suite kind (simple, complex, mixed/default) or a suite JSONL file.
    #[arg(long, global = true)]
    pub suite: Option<String>,
    /// Only write reports; no progress lines.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Base URL of a model server to use instead of the simulator.
    #[arg(long, global = true)]
    pub remote_backend: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse TextGrid/JSONL transcripts, or generate the synthetic corpus.
    Ingest {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        meetings: Option<usize>,
    },
    /// Segment meetings and inject labeled queries every 300 s.
    Inject {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Check a corpus and split assignment for leakage; exit 1 on leaks.
    VerifySplits {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Supervised routing head from an injected corpus or a scenario suite.
    TrainRouter {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
    },
    /// Route one query.
    Route {
        query: String,
        #[arg(long, default_value = "")]
        context: String,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Log replay tuples from an epsilon-greedy behavior policy.
    CollectReplay {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 3000)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        epsilon: f64,
    },
    /// Offline CQL refinement of both heads.
    TrainPolicy {
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
    /// Run a suite and write traces.
    Simulate {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Latency percentiles and SLO flags for a suite.
    Bench {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Compare execution modes (all of them unless --mode is given).
    Ablate {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Fit the isotonic map from automated to human scores.
    Calibrate {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Correlation statistics between automated and human scores.
    Stats {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        n_perm: usize,
        #[arg(long, default_value_t = 10_000)]
        n_boot: usize,
    },
    /// Ranking stability of per-model means under reweighted dimensions.
    SweepWeights {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        max_upweight: f64,
        #[arg(long, default_value_t = 10)]
        grid_steps: usize,
    },
    /// Non-dominated points of a JSON list of {quality, latency_s, cost_k}.
    Pareto { points: PathBuf },
    /// Build a retrieval index over documents and report its statistics.
    Index { docs: PathBuf },
    /// Hybrid search over documents.
    Search {
        docs: PathBuf,
        query: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        mix: f64,
    },
}

/// Model dimension means shipped with the crate, used when no scores are
/// given to `sweep-weights`.
const MODEL_DIMENSIONS: &str = include_str!("../data/model_dimensions.json");

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: Option<PathBuf>,
    mode: Option<Mode>,
    suite: Option<String>,
    remote: Option<String>,
    quiet: bool,
}

impl Ctx {
    fn mapping(&self) -> Result<ClassMapping, CliError> {
        Ok(match &self.cfg.class_mapping {
            Some(p) => ClassMapping::load(p)?,
            None => ClassMapping::default_mapping(),
        })
    }

    fn suite(&self) -> Result<ScenarioSuite, CliError> {
        let spec = self.suite.clone().or_else(|| self.cfg.suite.clone()).unwrap_or_else(|| "default".into());
        let mut suite = if Path::new(&spec).is_file() {
            ScenarioSuite::from_jsonl(&fs::read(&spec)?)?
        } else {
            let kind: SuiteKind = spec.parse()?;
            generate_suite(kind, self.cfg.suite_size, self.seed, &self.mapping()?)?
        };
        if let Some(p) = &self.cfg.kb {
            suite.kb.extend(load_documents(p)?);
        }
        if let Some(p) = &self.cfg.fixtures {
            suite.web.extend(load_documents(p)?);
        }
        Ok(suite)
    }

    fn engine(&self, suite: &ScenarioSuite) -> Engine {
        let mut e = Engine::with_timing(Toolbox::from_suite(suite, HashedNgrams::default()), self.cfg.timing);
        e.gate = self.cfg.gate.clone();
        if let Some(url) = &self.remote {
            e.backend = Arc::new(RemoteBackend::new(url.clone()));
        }
        e
    }

    fn path(&self, flag: &Option<PathBuf>, cfg: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| cfg.clone())
            .ok_or_else(|| CliError::Input(format!("no {what} given (flag or config)")))
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().ok_or_else(|| CliError::Input("--out directory required".into()))?;
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Writes the report to --out, or prints it when there is none.
    fn report(&self, command: &str, body: Value) -> Result<(), CliError> {
        let mut obj = serde_json::Map::new();
        obj.insert("command".into(), json!(command));
        obj.insert("seed".into(), json!(self.seed));
        if let Value::Object(m) = body {
            obj.extend(m);
        } else {
            obj.insert("result".into(), body);
        }
        let text = serde_json::to_string_pretty(&Value::Object(obj))? + "\n";
        match &self.out {
            Some(p) if p.is_dir() => fs::write(p.join("report.json"), text)?,
            Some(p) => fs::write(p, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }

    /// Learned heads from a directory written by `train-policy`, the
    /// router with rule tools from a weights blob, or the label baseline.
    fn policy(&self, dir: &Option<PathBuf>) -> Result<Box<dyn Policy>, CliError> {
        if let Some(d) = dir {
            let (router, _) = load_weights(&d.join("router.bin"))?;
            let (tool, _) = load_weights(&d.join("tool.bin"))?;
            return Ok(Box::new(LearnedPolicy { router, tool }));
        }
        if let Some(w) = &self.cfg.weights {
            let (router, _) = load_weights(w)?;
            return Ok(Box::new(RouterWithRules { router }));
        }
        Ok(Box::new(LabelPolicy))
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Transcript>, CliError> {
    Ok(parse_jsonl_corpus(&fs::read(path)?)?)
}

fn write_corpus(path: &Path, corpus: &[Transcript]) -> Result<(), CliError> {
    let text: String = corpus.iter().map(crate::corpus::emit_jsonl).collect();
    fs::write(path, text)?;
    Ok(())
}

fn read_splits(path: &Path) -> Result<SplitAssignment, CliError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn is_textgrid(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("textgrid"))
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env_seed = std::env::var("DUALPILOT_SEED").ok().and_then(|s| s.trim().parse().ok());
    let seed = cli.seed.or(cfg.seed).or(env_seed).unwrap_or(0);
    let mode = cli.mode.as_deref().map(str::parse::<Mode>).transpose()?;
    let ctx = Ctx {
        cfg,
        seed,
        out: cli.out,
        mode,
        suite: cli.suite,
        remote: cli.remote_backend,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Ingest {
            inputs,
            synthetic,
            meetings,
        } => ingest(&ctx, &inputs, synthetic, meetings),
        Command::Inject { corpus, splits } => inject(&ctx, &corpus, &splits),
        Command::VerifySplits { corpus, splits } => {
            let corpus = read_corpus(&ctx.path(&corpus, &ctx.cfg.corpus, "corpus")?)?;
            let splits = read_splits(&ctx.path(&splits, &ctx.cfg.splits, "splits")?)?;
            let report = verify_splits(&corpus, &splits);
            ctx.report("verify-splits", json!({ "clean": report.is_clean(), "report": report }))?;
            say!(ctx, "leakage check: {}", if report.is_clean() { "clean" } else { "LEAKS FOUND" });
            Ok(if report.is_clean() { 0 } else { 1 })
        }
        Command::TrainRouter { corpus, epochs } => train_router(&ctx, &corpus, epochs),
        Command::Route {
            query,
            context,
            weights,
        } => {
            let (w, _) = load_weights(&ctx.path(&weights, &ctx.cfg.weights, "weights")?)?;
            let x = HashedNgrams {
                dim: w.input,
                ..HashedNgrams::default()
            }
            .extract(&query, &context);
            let d = forward(&w, &x)?;
            ctx.report("route", json!({ "query": query, "decision": d }))?;
            Ok(0)
        }
        Command::CollectReplay { weights, n, epsilon } => {
            let suite = ctx.suite()?;
            let engine = ctx.engine(&suite);
            let router = match ctx.path(&weights, &ctx.cfg.weights, "weights") {
                Ok(p) => load_weights(&p)?.0,
                Err(_) => supervised_on_suite(&suite, &engine, 5, ctx.seed)?,
            };
            let behavior = EpsilonGreedy {
                inner: RouterWithRules { router },
                epsilon,
            };
            let replay = collect_replay(&suite, &behavior, &engine, n, ctx.seed)?;
            let out = ctx.out.clone().ok_or_else(|| CliError::Input("--out required".into()))?;
            fs::write(&out, emit_replay(&replay))?;
            let rate = replay.iter().filter(|t| t.task_success).count() as f64 / replay.len() as f64;
            say!(ctx, "{} tuples, success rate {rate:.3}, seed {}", replay.len(), ctx.seed);
            Ok(0)
        }
        Command::TrainPolicy {
            replay,
            weights,
            epochs,
        } => train_policy(&ctx, &replay, &weights, epochs),
        Command::Simulate { policy } => {
            let suite = ctx.suite()?;
            let engine = ctx.engine(&suite);
            let p = ctx.policy(&policy)?;
            let m = ctx.mode.unwrap_or(Mode::Parallel);
            let outcomes = run_suite(&engine, &suite, p.as_ref(), m, ctx.seed);
            let dir = ctx.out_dir()?;
            let traces: String = outcomes.iter().map(|o| o.trace.to_jsonl()).collect();
            fs::write(dir.join("traces.jsonl"), traces)?;
            let rows: Vec<Value> = outcomes
                .iter()
                .map(|o| {
                    let t = &o.trace;
                    json!({
                        "query_id": t.query_id, "response": o.response, "gate_outcome": t.gate_outcome,
                        "gate_annotation": t.gate_annotation, "lane_used": t.lane_used, "latency_ms": t.latency_ms,
                        "talker_tokens_k": t.talker_tokens_k, "planner_tokens_k": t.planner_tokens_k,
                        "tools_called": t.tools_called, "hops_used": t.hops_used, "task_success": t.task_success,
                    })
                })
                .collect();
            let success = outcomes.iter().filter(|o| o.trace.task_success).count() as f64 / outcomes.len() as f64;
            ctx.report(
                "simulate",
                json!({ "suite": suite.name, "mode": m, "success_rate": success, "queries": rows }),
            )?;
            say!(ctx, "{} queries, success rate {success:.3}", outcomes.len());
            Ok(0)
        }
        Command::Bench { policy } => {
            let suite = ctx.suite()?;
            let engine = ctx.engine(&suite);
            let p = ctx.policy(&policy)?;
            let m = ctx.mode.unwrap_or(Mode::Parallel);
            let traces: Vec<_> = run_suite(&engine, &suite, p.as_ref(), m, ctx.seed).into_iter().map(|o| o.trace).collect();
            let stats = latency_stats(&traces, &[50.0, 90.0])?;
            let overall = &stats.overall.percentiles;
            let (p50, p90) = (overall[0].value_s, overall[1].value_s);
            ctx.report(
                "bench",
                json!({ "suite": suite.name, "mode": m, "p50_s": p50, "p90_s": p90, "stats": stats }),
            )?;
            say!(ctx, "{} {m}: P50 {p50:.3}s P90 {p90:.3}s", suite.name);
            if let Some(slo) = &stats.simple_slo {
                say!(ctx, "simple SLO: P50 ok {} P90 ok {}", slo.p50_ok, slo.p90_ok);
            }
            Ok(0)
        }
        Command::Ablate { policy } => {
            let suite = ctx.suite()?;
            let engine = ctx.engine(&suite);
            let p = ctx.policy(&policy)?;
            let modes: Vec<Mode> = ctx.mode.map_or_else(|| Mode::ALL.to_vec(), |m| vec![m]);
            let report = run_ablation(&engine, &suite, p.as_ref(), &modes, ctx.seed)?;
            for m in &report.modes {
                say!(ctx, 
                    "{:<13} quality {:.3} P50 {:.2}s P90 {:.2}s tokens {:.2}k",
                    m.mode.to_string(),
                    m.quality_proxy,
                    m.p50_s,
                    m.p90_s,
                    m.mean_tokens_k
                );
            }
            ctx.report("ablate", serde_json::to_value(&report)?)?;
            Ok(0)
        }
        Command::Calibrate { scores } => {
            let (auto, human) = scored_pairs(&ctx.path(&scores, &ctx.cfg.scores, "scores")?)?;
            let map = pava_fit(&auto, &human)?;
            let out = ctx.out.clone().ok_or_else(|| CliError::Input("--out required".into()))?;
            fs::write(&out, map.to_json() + "\n")?;
            say!(ctx, "{} points, {} breakpoints", auto.len(), map.breakpoints.len());
            Ok(0)
        }
        Command::Stats {
            scores,
            map,
            n_perm,
            n_boot,
        } => {
            let (mut auto, human) = scored_pairs(&ctx.path(&scores, &ctx.cfg.scores, "scores")?)?;
            if let Some(p) = map {
                let m = IsotonicMap::from_json(&fs::read_to_string(p)?)?;
                auto.iter_mut().for_each(|a| *a = apply_map(&m, *a));
            }
            let r = correlations(&auto, &human, n_perm, n_boot, ctx.seed)?;
            say!(ctx, "pearson {:.4} spearman {:.4} kendall {:.4}", r.pearson_r, r.spearman_rho, r.kendall_tau);
            ctx.report("stats", serde_json::to_value(&r)?)?;
            Ok(0)
        }
        Command::SweepWeights {
            scores,
            max_upweight,
            grid_steps,
        } => {
            if max_upweight < 1.0 || grid_steps == 0 {
                return Err(CliError::Input("need max_upweight >= 1 and grid_steps >= 1".into()));
            }
            let rows: Vec<(String, [f64; 5])> = match scores.or(ctx.cfg.scores.clone()) {
                Some(p) => model_means(&parse_scores(&fs::read(p)?)?),
                None => {
                    #[derive(Deserialize)]
                    struct Row {
                        model: String,
                        dims: [f64; 5],
                    }
                    let rows: Vec<Row> = serde_json::from_str(MODEL_DIMENSIONS)?;
                    rows.into_iter().map(|r| (r.model, r.dims)).collect()
                }
            };
            let dims: Vec<[f64; 5]> = rows.iter().map(|(_, d)| *d).collect();
            let r = weight_sensitivity(&dims, max_upweight, grid_steps)?;
            say!(ctx, "min Kendall tau {:.4} over {} weight vectors", r.min_kendall_tau, r.vectors_evaluated);
            let models: Vec<&str> = rows.iter().map(|(m, _)| m.as_str()).collect();
            ctx.report("sweep-weights", json!({ "models": models, "report": r }))?;
            Ok(0)
        }
        Command::Pareto { points } => {
            let pts: Vec<ParetoPoint> = serde_json::from_str(&fs::read_to_string(points)?)?;
            let frontier = pareto_frontier(&pts);
            say!(ctx, "{} of {} points on the frontier", frontier.len(), pts.len());
            ctx.report("pareto", json!({ "frontier": frontier, "points": frontier.iter().map(|&i| pts[i]).collect::<Vec<_>>() }))?;
            Ok(0)
        }
        Command::Index { docs } => {
            let idx = RetrievalIndex::build(load_documents(&docs)?, HashedNgrams::default());
            say!(ctx, "{} documents indexed", idx.len());
            ctx.report(
                "index",
                json!({ "documents": idx.len(), "avg_len": idx.avg_len(), "doc_ids": idx.doc_ids().collect::<Vec<_>>() }),
            )?;
            Ok(0)
        }
        Command::Search { docs, query, k, mix } => {
            if !(0.0..=1.0).contains(&mix) {
                return Err(CliError::Input(format!("mix {mix} outside [0, 1]")));
            }
            let idx = RetrievalIndex::build(load_documents(&docs)?, HashedNgrams::default());
            let hits = hybrid_search(&idx, &query, k, mix)?;
            for h in &hits {
                say!(ctx, "{:.4}  {}", h.score, h.source_id);
            }
            ctx.report("search", json!({ "query": query, "k": k, "mix": mix, "results": hits }))?;
            Ok(0)
        }
    }
}

fn ingest(ctx: &Ctx, inputs: &[PathBuf], synthetic: bool, meetings: Option<usize>) -> Result<i32, CliError> {
    if synthetic {
        let base = SynthConfig::default();
        let n = meetings.unwrap_or(base.meetings).max(1);
        // keep the injection density when the meeting count changes
        let cfg = SynthConfig {
            seed: ctx.seed,
            meetings: n,
            injected_turns: (base.injected_turns * n).div_ceil(base.meetings),
            ..base
        };
        let c = generate_corpus(&cfg, &ctx.mapping()?)?;
        let dir = ctx.out_dir()?;
        write_corpus(&dir.join("corpus.jsonl"), &c.transcripts)?;
        fs::write(dir.join("splits.json"), serde_json::to_string_pretty(&c.splits)? + "\n")?;
        let dist = class_distribution(&c.transcripts)?;
        let injected: usize = c.transcripts.iter().map(|t| t.injected_turns().count()).sum();
        ctx.report(
            "ingest",
            json!({ "meetings": c.transcripts.len(), "injected_turns": injected, "band_distribution": dist.to_vec() }),
        )?;
        say!(ctx, "{} meetings, {injected} injected turns", c.transcripts.len());
        return Ok(0);
    }
    if inputs.is_empty() {
        return Err(CliError::Input("no inputs (pass files or --synthetic)".into()));
    }
    let mut corpus = Vec::new();
    for p in inputs {
        let bytes = fs::read(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        if is_textgrid(p) {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            corpus.push(parse_textgrid(&bytes, &id)?);
        } else {
            corpus.extend(parse_jsonl_corpus(&bytes)?);
        }
    }
    corpus.sort_by(|a, b| a.meeting_id.cmp(&b.meeting_id));
    let out = ctx.out.clone().ok_or_else(|| CliError::Input("--out required".into()))?;
    write_corpus(&out, &corpus)?;
    let turns: usize = corpus.iter().map(|t| t.turns.len()).sum();
    say!(ctx, "{} meetings, {turns} turns", corpus.len());
    Ok(0)
}

fn inject(ctx: &Ctx, corpus: &Option<PathBuf>, splits: &Option<PathBuf>) -> Result<i32, CliError> {
    let mut corpus = read_corpus(&ctx.path(corpus, &ctx.cfg.corpus, "corpus")?)?;
    if let Some(t) = corpus.iter().find(|t| t.injected_turns().next().is_some()) {
        return Err(CliError::Input(format!("meeting {} already has injected queries", t.meeting_id)));
    }
    let splits = match splits.clone().or(ctx.cfg.splits.clone()) {
        Some(p) => Some(read_splits(&p)?),
        None => None,
    };
    let mapping = ctx.mapping()?;
    let dist = ClassDistribution::enterprise_default();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut injected = 0usize;
    let mut cross = 0usize;
    for i in 0..corpus.len() {
        let points: Vec<_> = segment(&corpus[i], 1800.0)
            .iter()
            .map(|s| schedule_injections(s, 300.0, &dist, &mapping, &mut rng))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        for point in points {
            let fact = random_fact(&mut rng);
            let text = render_query(&point.label, &fact, &mut rng);
            // cross-meeting queries draw evidence from a same-split meeting
            let partner = splits.as_ref().filter(|_| point.label.cd == Cd::CrossMeeting).and_then(|s| {
                let split = s.split_of(&corpus[i].meeting_id)?;
                let candidates: Vec<usize> = (0..corpus.len())
                    .filter(|&j| j != i && s.split_of(&corpus[j].meeting_id) == Some(split))
                    .collect();
                candidates.choose(&mut rng).copied()
            });
            match (partner, &splits) {
                (Some(j), Some(s)) => {
                    let source = corpus[j].clone();
                    inject_cross_meeting(&source, &mut corpus[i], s, &point, &text, Some(fact.sentence))?;
                    cross += 1;
                }
                _ => {
                    inject_query(&mut corpus[i], &point, &text, Some(fact.sentence));
                }
            }
            injected += 1;
        }
    }
    let out = ctx.out.clone().ok_or_else(|| CliError::Input("--out required".into()))?;
    write_corpus(&out, &corpus)?;
    say!(ctx, "{injected} queries injected ({cross} cross-meeting) into {} meetings", corpus.len());
    Ok(0)
}

fn supervised_on_suite(
    suite: &ScenarioSuite,
    engine: &Engine,
    epochs: usize,
    seed: u64,
) -> Result<crate::nn::Mlp, CliError> {
    let data: Vec<(FeatureVector, RoutingAction)> = suite
        .scenarios
        .iter()
        .map(|s| (engine.features(s), route_label(&s.label)))
        .collect();
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    Ok(train_supervised(&data, &cfg)?.weights)
}

fn train_router(ctx: &Ctx, corpus: &Option<PathBuf>, epochs: usize) -> Result<i32, CliError> {
    let data: Vec<(FeatureVector, RoutingAction)> = match corpus.clone().or(ctx.cfg.corpus.clone()) {
        Some(p) => derive_labels(&read_corpus(&p)?, &HashedNgrams::default())?
            .into_iter()
            .map(|e| (e.features, e.action))
            .collect(),
        None => {
            let suite = ctx.suite()?;
            let engine = ctx.engine(&suite);
            suite
                .scenarios
                .iter()
                .map(|s| (engine.features(s), route_label(&s.label)))
                .collect()
        }
    };
    let cfg = TrainConfig {
        epochs,
        seed: ctx.seed,
        ..TrainConfig::default()
    };
    let head = train_supervised(&data, &cfg)?;
    let out = ctx.out.clone().ok_or_else(|| CliError::Input("--out required".into()))?;
    save_weights(&head.weights, ctx.seed, &out)?;
    say!(ctx, 
        "{} examples, train accuracy {:.3}, held-out accuracy {}",
        data.len(),
        head.train_accuracy,
        head.heldout_accuracy.map_or("n/a".to_string(), |a| format!("{a:.3}"))
    );
    Ok(0)
}

fn train_policy(ctx: &Ctx, replay: &Option<PathBuf>, weights: &Option<PathBuf>, epochs: usize) -> Result<i32, CliError> {
    let replay = parse_replay(&fs::read(ctx.path(replay, &ctx.cfg.replay, "replay")?)?)?;
    let dim = replay.first().map_or(DEFAULT_DIM, |t| t.features.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let router_init = match weights.clone().or(ctx.cfg.weights.clone()) {
        Some(p) => load_weights(&p)?.0,
        None => init_router(dim, &mut rng),
    };
    let tool_init = init_tool_head(dim, TOOL_HIDDEN, &mut rng);
    let cfg = CqlConfig {
        epochs,
        seed: ctx.seed,
        ..CqlConfig::default()
    };
    let rep = train_cql(&replay, &router_init, &tool_init, &cfg, &ctx.cfg.reward)?;
    let dir = ctx.out_dir()?;
    save_weights(&rep.router, ctx.seed, &dir.join("router.bin"))?;
    save_weights(&rep.tool, ctx.seed, &dir.join("tool.bin"))?;
    let summary: BTreeMap<&str, Value> = BTreeMap::from([
        ("tuples", json!(replay.len())),
        ("router_losses", json!(rep.router_losses)),
        ("tool_losses", json!(rep.tool_losses)),
        ("min_penalty", json!(rep.min_penalty)),
        ("heldout_behavior_value", json!(rep.heldout_behavior_value)),
        ("pre_greedy_value", json!(rep.pre_greedy_value)),
        ("post_greedy_value", json!(rep.post_greedy_value)),
    ]);
    ctx.report("train-policy", serde_json::to_value(summary)?)?;
    say!(ctx, 
        "router loss {:.4} -> {:.4}, tool loss {:.4} -> {:.4}",
        rep.router_losses[0],
        rep.router_losses.last().unwrap(),
        rep.tool_losses[0],
        rep.tool_losses.last().unwrap()
    );
    Ok(0)
}

/// Hidden width of the tool head.
pub const TOOL_HIDDEN: usize = 64;

/// Equal-weight automated overall and human overall for every record that
/// has a human score.
fn scored_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let recs = parse_scores(&fs::read(path)?)?;
    let mut auto = Vec::new();
    let mut human = Vec::new();
    for r in &recs {
        if let Some(h) = r.human_overall {
            auto.push(crate::evalkit::aggregate(&r.dims, &EQUAL_WEIGHTS)?);
            human.push(h);
        }
    }
    if auto.is_empty() {
        return Err(CliError::Input("no records with human_overall".into()));
    }
    Ok((auto, human))
}
