//! The dual-lane runtime. A query is routed, the Talker and Planner lanes
//! run on a virtual clock, and the gate decides which lane answers. Every
//! run is a pure function of the scenario, the policy, the mode and a seed.

mod backend;
mod planner;
mod scenario;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    parse_stream, stream_pieces, Backend, BackendError, BackendTiming, GenerateRequest, Lane, RemoteBackend,
    SentinelDelay, SimulatedBackend, StreamToken,
};
pub use planner::{
    compose, plan_loop, query_entity, talker_draft, PlanCard, PlanOutcome, StopCriteria, StopReason, ToolCallRecord,
    ToolLatency, ToolResult, Toolbox, DEFAULT_TAU, EVIDENCE_BUDGET, MAX_HOPS, TALKER_WINDOW, TOOL_TOP_K,
};
pub use scenario::{generate_suite, Scenario, ScenarioKind, ScenarioSuite, SuiteKind, CONTEXT_TURNS, HISTORY_MEETINGS};

use crate::evalkit::nearest_rank;
use crate::policy::{task_success, EvidenceState, Policy, PolicyInput, ToolAction};
use crate::router::{FeatureExtractor, FeatureVector, HashedNgrams};
use crate::taxonomy::{Band, RoutingAction};
use crate::text::{splitmix64, stable_hash, word_count};

/// Prompt tokens every Talker call spends before the query: system
/// prompt and persona.
pub const TALKER_SYSTEM_TOKENS: usize = 300;
/// Same for the Planner, whose prompt also carries tool schemas.
pub const PLANNER_SYSTEM_TOKENS: usize = 400;
pub const TALKER_MAX_TOKENS: usize = 96;
pub const PLANNER_MAX_TOKENS: usize = 256;
/// Words of context the router sees.
pub const DIGEST_WORDS: usize = 40;
/// Latency budgets for simple queries, in seconds.
pub const SIMPLE_SLO_P50_S: f64 = 1.5;
pub const SIMPLE_SLO_P90_S: f64 = 2.0;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("suite has no scenarios")]
    EmptySuite,
    #[error("no traces")]
    EmptyTraces,
    #[error("invalid plan: {0}")]
    BadPlan(String),
    #[error("invalid gate config: {0}")]
    BadGate(String),
    #[error(transparent)]
    Tool(#[from] crate::tools::ToolError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub confidence_threshold: f64,
    pub sentinel_window_ms: u32,
    pub sentinel_target_ms: u32,
    pub sentinel_token: String,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.75,
            sentinel_window_ms: 400,
            sentinel_target_ms: 300,
            sentinel_token: "T".to_string(),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(OrchestratorError::BadGate(format!("threshold {}", self.confidence_threshold)));
        }
        if self.sentinel_target_ms == 0 || self.sentinel_target_ms > self.sentinel_window_ms {
            return Err(OrchestratorError::BadGate(format!(
                "target {}ms outside window {}ms",
                self.sentinel_target_ms, self.sentinel_window_ms
            )));
        }
        if self.sentinel_token.is_empty() {
            return Err(OrchestratorError::BadGate("empty sentinel token".into()));
        }
        Ok(())
    }
}

/// Execution strategies compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Router and gate only; the Planner gets no tools.
    RoutingOnly,
    /// Every query goes to the Planner with tools.
    ToolsOnly,
    /// Talker first, Planner after it finishes.
    Serial,
    /// Both lanes start at once.
    Parallel,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::RoutingOnly, Mode::ToolsOnly, Mode::Serial, Mode::Parallel];
}

impl FromStr for Mode {
    type Err = OrchestratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "routing_only" => Ok(Self::RoutingOnly),
            "tools_only" => Ok(Self::ToolsOnly),
            "serial" => Ok(Self::Serial),
            "parallel" => Ok(Self::Parallel),
            _ => Err(OrchestratorError::UnknownMode(s.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RoutingOnly => "routing_only",
            Self::ToolsOnly => "tools_only",
            Self::Serial => "serial",
            Self::Parallel => "parallel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateOutcome {
    ConfidentFast,
    ConfidentSlow,
    SentinelFast,
    SentinelTimeout,
}

impl GateOutcome {
    pub fn talker_answers(self) -> bool {
        matches!(self, Self::ConfidentFast | Self::SentinelFast)
    }
}

/// Sentinel anomalies, recorded alongside the resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateAnnotation {
    /// A simple query whose sentinel never came.
    MissTrigger,
    /// The sentinel came after the window closed.
    LateTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Received,
    RouterDecision,
    TalkerFirstToken,
    TalkerToken,
    SentinelEmitted,
    GateResolved,
    TalkerInterrupted,
    ToolCall,
    HopCompleted,
    Composed,
    Responded,
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: f64,
    pub event: EventKind,
    pub detail: String,
}

#[derive(Serialize, Deserialize)]
struct TraceLine<'a> {
    query_id: &'a str,
    t_ms: f64,
    event: EventKind,
    detail: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub query_id: String,
    pub band: Band,
    pub mode: Mode,
    pub events: Vec<TraceEvent>,
    pub lane_used: Lane,
    pub talker_tokens_k: f64,
    pub planner_tokens_k: f64,
    pub gate_outcome: GateOutcome,
    pub gate_annotation: Option<GateAnnotation>,
    /// Time of the last response token.
    pub latency_ms: f64,
    pub route: RoutingAction,
    pub router_confidence: f64,
    pub tool_action: ToolAction,
    pub tools_called: Vec<ToolAction>,
    pub hops_used: usize,
    /// Evidence the Planner gathered; zero when the Talker answered.
    pub evidence: EvidenceState,
    /// Evidence probed before the tool choice.
    pub probe: EvidenceState,
    pub task_success: bool,
}

impl ExecutionTrace {
    pub fn tokens_k(&self) -> f64 {
        self.talker_tokens_k + self.planner_tokens_k
    }

    /// One JSON object per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let line = TraceLine {
                query_id: &self.query_id,
                t_ms: e.t_ms,
                event: e.event,
                detail: &e.detail,
            };
            out.push_str(&serde_json::to_string(&line).expect("trace line serializes"));
            out.push('\n');
        }
        out
    }
}

/// Parses trace JSONL back into `(query_id, event)` pairs.
pub fn parse_trace_events(text: &str) -> Result<Vec<(String, TraceEvent)>, OrchestratorError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let t: TraceLine = serde_json::from_str(l).map_err(|e| OrchestratorError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            Ok((
                t.query_id.to_string(),
                TraceEvent {
                    t_ms: t.t_ms,
                    event: t.event,
                    detail: t.detail.to_string(),
                },
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub response: String,
    pub trace: ExecutionTrace,
    pub features: FeatureVector,
}

/// Per-query seed that depends only on the run seed and the query, so runs
/// over different policies or modes share their random draws.
pub fn query_seed(seed: u64, query_id: &str) -> u64 {
    splitmix64(stable_hash(seed, query_id.as_bytes()))
}

/// Events from both lanes, kept in emission order and sorted by time at
/// the end.
#[derive(Default)]
struct Timeline {
    events: Vec<(f64, usize, TraceEvent)>,
}

impl Timeline {
    fn push(&mut self, t_ms: f64, event: EventKind, detail: impl Into<String>) {
        let seq = self.events.len();
        self.events.push((
            t_ms,
            seq,
            TraceEvent {
                t_ms,
                event,
                detail: detail.into(),
            },
        ));
    }

    fn finish(mut self) -> Vec<TraceEvent> {
        self.events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.events.into_iter().map(|(_, _, e)| e).collect()
    }
}

/// One backend call placed on the clock.
struct Call {
    prompt_tokens: usize,
    /// Absolute token times and text.
    tokens: Vec<(f64, String)>,
}

impl Call {
    /// Tokens billed if the lane is stopped at `cutoff`: nothing unless the
    /// first token came out before it, then the prompt plus emitted tokens.
    fn billed(&self, cutoff: f64) -> usize {
        match self.tokens.first() {
            Some((t, _)) if *t < cutoff => {
                self.prompt_tokens + self.tokens.iter().filter(|(t, _)| *t < cutoff).count()
            }
            _ => 0,
        }
    }

    fn end(&self, start: f64) -> f64 {
        self.tokens.last().map_or(start, |(t, _)| *t)
    }

    fn text(&self) -> String {
        self.tokens.iter().map(|(_, s)| s.as_str()).collect()
    }
}

struct PlannerRun {
    calls: Vec<Call>,
    /// Planner events with their times, not yet on the timeline.
    events: Vec<(f64, EventKind, String)>,
    tool_times: Vec<(f64, ToolAction)>,
    answer: String,
    end_ms: f64,
    outcome: Option<PlanOutcome>,
}

impl PlannerRun {
    fn tokens(&self, cutoff: f64) -> usize {
        self.calls.iter().map(|c| c.billed(cutoff)).sum()
    }
}

#[derive(Clone)]
pub struct Engine {
    pub gate: GateConfig,
    pub timing: BackendTiming,
    pub toolbox: Toolbox,
    pub extractor: HashedNgrams,
    pub backend: Arc<dyn Backend>,
    pub tau: f64,
    pub router_ms: f64,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("gate", &self.gate)
            .field("timing", &self.timing)
            .field("tau", &self.tau)
            .finish_non_exhaustive()
    }
}

fn route_tools(route: RoutingAction) -> &'static [ToolAction] {
    match route {
        RoutingAction::SlowRag => &[ToolAction::KbRetrieval],
        RoutingAction::SlowCross => &[ToolAction::CrossMeeting],
        RoutingAction::Fast | RoutingAction::Slow => &[],
    }
}

fn tool_name(t: ToolAction) -> &'static str {
    match t {
        ToolAction::None => "none",
        ToolAction::KbRetrieval => "kb_retrieval",
        ToolAction::CrossMeeting => "cross_meeting",
        ToolAction::Web => "web",
        ToolAction::Combo => "combo",
    }
}

fn context_digest(context: &[String]) -> String {
    let words: Vec<&str> = context.iter().flat_map(|t| t.split_whitespace()).collect();
    words[words.len().saturating_sub(DIGEST_WORDS)..].join(" ")
}

impl Engine {
    /// Simulated backend with default gate, timings and features.
    pub fn simulated(toolbox: Toolbox) -> Self {
        Self::with_timing(toolbox, BackendTiming::default())
    }

    pub fn with_timing(toolbox: Toolbox, timing: BackendTiming) -> Self {
        Self {
            gate: GateConfig::default(),
            timing,
            toolbox,
            extractor: HashedNgrams::default(),
            backend: Arc::new(SimulatedBackend { timing }),
            tau: DEFAULT_TAU,
            router_ms: 1.0,
        }
    }

    pub fn for_suite(suite: &ScenarioSuite) -> Self {
        Self::simulated(Toolbox::from_suite(suite, HashedNgrams::default()))
    }

    pub fn features(&self, scenario: &Scenario) -> FeatureVector {
        self.extractor.extract(&scenario.query, &context_digest(&scenario.context))
    }

    fn call(
        &self,
        lane: Lane,
        start: f64,
        prompt: &str,
        draft: &str,
        continuation: bool,
        jitter: f64,
    ) -> Result<Call, BackendError> {
        let max_tokens = match lane {
            Lane::Talker => TALKER_MAX_TOKENS,
            Lane::Planner => PLANNER_MAX_TOKENS,
        };
        let system = match lane {
            Lane::Talker => TALKER_SYSTEM_TOKENS,
            Lane::Planner => PLANNER_SYSTEM_TOKENS,
        };
        let toks = self.backend.generate(&GenerateRequest {
            lane,
            prompt,
            max_tokens,
            draft,
            continuation,
            jitter,
        })?;
        Ok(Call {
            prompt_tokens: system + word_count(prompt),
            tokens: toks.into_iter().map(|t| (start + t.t_ms, t.token)).collect(),
        })
    }

    /// Runs the Planner lane from `start`: analyse, planning hops with
    /// their tool calls, then compose.
    fn run_planner<P: Policy + ?Sized>(
        &self,
        scenario: &Scenario,
        start: f64,
        jitter: f64,
        chain: &[ToolAction],
        tools_enabled: bool,
        policy: &P,
        input: &PolicyInput<'_>,
    ) -> PlannerRun {
        let mut run = PlannerRun {
            calls: Vec::new(),
            events: Vec::new(),
            tool_times: Vec::new(),
            answer: String::new(),
            end_ms: start,
            outcome: None,
        };
        let context = scenario.context.join("\n");
        let prompt = format!("{context}\n{}", scenario.query);
        let card = match PlanCard::new(scenario.label, chain, self.tau) {
            Ok(c) => c,
            Err(e) => {
                run.events.push((start, EventKind::BackendFailure, e.to_string()));
                return self.degraded(run, scenario, start);
            }
        };
        let mut hop_policy = |ev: &EvidenceState| {
            if tools_enabled {
                policy.tool(input, ev)
            } else {
                ToolAction::None
            }
        };
        let outcome = plan_loop(
            &scenario.query,
            &scenario.context,
            &card,
            &self.toolbox,
            &mut hop_policy,
            EVIDENCE_BUDGET,
        );

        let mut t = start;
        let analyse = match self.call(Lane::Planner, t, &prompt, &card.render(), false, jitter) {
            Ok(c) => c,
            Err(e) => {
                run.events.push((t, EventKind::BackendFailure, e.to_string()));
                return self.degraded(run, scenario, t);
            }
        };
        t = analyse.end(t);
        run.calls.push(analyse);
        run.events.push((t, EventKind::HopCompleted, "hop 1 analyse".into()));

        let mut evidence_words = 0;
        for (i, calls) in outcome.hop_calls().into_iter().enumerate() {
            let hop = i + 2;
            let draft = if calls.is_empty() {
                "no further tools".to_string()
            } else {
                calls.iter().map(|c| format!("call {}", tool_name(c.tool))).collect::<Vec<_>>().join(" ")
            };
            let hop_prompt = format!("{prompt}\n{}", card.render());
            let c = match self.call(Lane::Planner, t, &hop_prompt, &draft, true, jitter) {
                Ok(c) => c,
                Err(e) => {
                    run.events.push((t, EventKind::BackendFailure, e.to_string()));
                    return self.degraded(run, scenario, t);
                }
            };
            t = c.end(t);
            run.calls.push(c);
            for rec in calls {
                let detail = match &rec.error {
                    Some(err) => format!("{} failed: {err}", tool_name(rec.tool)),
                    None => format!("{} returned {} kept {}", tool_name(rec.tool), rec.returned, rec.kept),
                };
                run.events.push((t, EventKind::ToolCall, detail));
                run.tool_times.push((t, rec.tool));
                t += self.toolbox.latency.of(rec.tool);
            }
            run.events.push((t, EventKind::HopCompleted, format!("hop {hop} planning")));
            evidence_words = outcome.snippets.iter().map(|s| word_count(&s.text)).sum::<usize>();
        }

        let compose_prompt = format!("{prompt}\n{}", card.render());
        let compose = match self.call(Lane::Planner, t, &compose_prompt, &outcome.answer, true, jitter) {
            Ok(mut c) => {
                c.prompt_tokens += evidence_words;
                c
            }
            Err(e) => {
                run.events.push((t, EventKind::BackendFailure, e.to_string()));
                return self.degraded(run, scenario, t);
            }
        };
        t = compose.end(t);
        run.answer = compose.text();
        run.calls.push(compose);
        run.events.push((t, EventKind::Composed, format!("{} snippets", outcome.snippets.len())));
        run.end_ms = t;
        run.outcome = Some(outcome);
        run
    }

    /// Conservative answer after a Planner backend failure: context only.
    fn degraded(&self, mut run: PlannerRun, scenario: &Scenario, t: f64) -> PlannerRun {
        run.answer = compose(&scenario.query, &scenario.context, &[], &scenario.label);
        run.end_ms = t;
        run
    }

    /// Runs one query. `seed` fixes jitter and the sentinel draw.
    pub fn handle_query<P: Policy + ?Sized>(&self, scenario: &Scenario, policy: &P, mode: Mode, seed: u64) -> QueryOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = || 1.0 + self.timing.first_token_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let talker_jitter = jitter();
        let planner_jitter = jitter();
        let (u_kind, u_delay): (f64, f64) = (rng.random(), rng.random());
        let simple = scenario.kind == ScenarioKind::Simple;
        let sentinel_delay = if simple {
            self.timing.sentinel.sample(u_kind, u_delay)
        } else {
            None
        };
        let window = f64::from(self.gate.sentinel_window_ms);

        let features = self.features(scenario);
        let input = PolicyInput {
            features: &features,
            label: &scenario.label,
            nonce: seed,
        };
        let probe = self.toolbox.probe(&scenario.query);
        let mut tl = Timeline::default();
        tl.push(0.0, EventKind::Received, scenario.query_id.clone());

        // routing and the gate's first look
        let (route, confidence, t_r) = if mode == Mode::ToolsOnly {
            (RoutingAction::Slow, 1.0, 0.0)
        } else {
            let d = policy.route(&input);
            tl.push(
                self.router_ms,
                EventKind::RouterDecision,
                format!("{:?} confidence {:.4}", d.action, d.confidence),
            );
            (d.action, d.confidence, self.router_ms)
        };
        let confident = confidence >= self.gate.confidence_threshold;
        let tool_action = if mode == Mode::RoutingOnly {
            ToolAction::None
        } else {
            policy.tool(&input, &probe)
        };
        let chain: Vec<ToolAction> = match mode {
            Mode::RoutingOnly => Vec::new(),
            Mode::ToolsOnly if tool_action == ToolAction::None => vec![ToolAction::KbRetrieval],
            Mode::ToolsOnly => vec![tool_action],
            Mode::Serial | Mode::Parallel => {
                let mut c = route_tools(route).to_vec();
                c.push(tool_action);
                c
            }
        };

        // lane start times; None means the lane never runs
        let pre = if confident && route.is_fast() {
            Some(GateOutcome::ConfidentFast)
        } else if confident || mode == Mode::ToolsOnly {
            Some(GateOutcome::ConfidentSlow)
        } else {
            None
        };
        let talker_start = match (mode, pre) {
            (Mode::ToolsOnly, _) | (Mode::RoutingOnly, Some(GateOutcome::ConfidentSlow)) => None,
            (Mode::Parallel, _) => Some(0.0),
            _ => Some(t_r),
        };

        let talker_prompt = {
            let s = scenario.context.len().saturating_sub(TALKER_WINDOW);
            format!("{}\n{}", scenario.context[s..].join("\n"), scenario.query)
        };
        let mut talker: Option<Call> = None;
        if let Some(ts) = talker_start {
            let draft = talker_draft(&scenario.query, &scenario.context);
            match self.call(Lane::Talker, ts, &talker_prompt, &draft, false, talker_jitter) {
                Ok(c) => talker = Some(c),
                Err(e) => tl.push(ts, EventKind::BackendFailure, format!("talker: {e}")),
            }
        }
        let talker_end = talker.as_ref().map(|c| c.end(talker_start.unwrap_or(0.0)));

        let planner_start = match (mode, pre) {
            (_, Some(GateOutcome::ConfidentFast)) if talker.is_some() => None,
            (Mode::Parallel | Mode::ToolsOnly, _) => Some(0.0),
            (Mode::RoutingOnly, _) => Some(t_r),
            // serial: after the Talker, or straight away if it failed
            (Mode::Serial, _) => Some(talker_end.unwrap_or(t_r)),
        };

        // gate resolution
        let (mut gate, mut annotation, gate_t) = match pre {
            Some(GateOutcome::ConfidentFast) if talker.is_some() => (GateOutcome::ConfidentFast, None, t_r),
            Some(GateOutcome::ConfidentFast) => (GateOutcome::ConfidentSlow, None, t_r),
            Some(g) => (g, None, t_r),
            None => {
                let ps = planner_start.expect("uncertain queries start the planner");
                if let Some(d) = sentinel_delay {
                    tl.push(ps + d, EventKind::SentinelEmitted, self.gate.sentinel_token.clone());
                }
                match sentinel_delay {
                    Some(d) if d <= window && talker.is_some() => (GateOutcome::SentinelFast, None, ps + d),
                    Some(d) if d > window => (GateOutcome::SentinelTimeout, Some(GateAnnotation::LateTrigger), ps + window),
                    None if simple => (GateOutcome::SentinelTimeout, Some(GateAnnotation::MissTrigger), ps + window),
                    _ => (GateOutcome::SentinelTimeout, None, ps + window),
                }
            }
        };
        if mode == Mode::ToolsOnly {
            annotation = None;
            gate = GateOutcome::ConfidentSlow;
        }
        let detail = match (mode, annotation) {
            (Mode::ToolsOnly, _) => "ConfidentSlow forced".to_string(),
            (_, Some(a)) => format!("{gate:?} {a:?}"),
            (_, None) => format!("{gate:?}"),
        };
        tl.push(gate_t, EventKind::GateResolved, detail);

        let talker_answers = gate.talker_answers();
        // the Talker stops at the gate unless it answers; in serial mode it
        // has already finished
        let talker_cut = if talker_answers || mode == Mode::Serial {
            f64::INFINITY
        } else {
            gate_t
        };
        let mut talker_tokens = 0;
        if let (Some(c), Some(ts)) = (&talker, talker_start) {
            for (i, (t, _)) in c.tokens.iter().enumerate().filter(|(_, (t, _))| *t < talker_cut) {
                let kind = if i == 0 {
                    EventKind::TalkerFirstToken
                } else {
                    EventKind::TalkerToken
                };
                tl.push(*t, kind, "");
            }
            if talker_cut.is_finite() && c.end(ts) >= talker_cut {
                tl.push(talker_cut, EventKind::TalkerInterrupted, format!("at {talker_cut:.1}ms"));
            }
            talker_tokens = c.billed(talker_cut);
        }

        // a released Talker answer cancels the Planner at the gate
        let planner_cut = if talker_answers { gate_t } else { f64::INFINITY };
        let tools_enabled = mode != Mode::RoutingOnly;
        let run = planner_start
            .map(|ps| self.run_planner(scenario, ps, planner_jitter, &chain, tools_enabled, policy, &input));
        let mut planner_tokens = 0;
        if let Some(r) = &run {
            for (t, kind, detail) in r.events.iter().filter(|(t, _, _)| *t < planner_cut) {
                tl.push(*t, *kind, detail.clone());
            }
            planner_tokens = r.tokens(planner_cut);
        }
        let (response, latency_ms, lane_used, plan) = if talker_answers {
            let c = talker.as_ref().expect("talker answers only when it ran");
            (c.text(), c.end(0.0).max(gate_t), Lane::Talker, None)
        } else {
            let r = run.as_ref().expect("planner path has a run");
            (r.answer.clone(), r.end_ms.max(gate_t), Lane::Planner, Some(r))
        };
        tl.push(latency_ms, EventKind::Responded, format!("{lane_used:?}"));

        let (evidence, hops_used, tools_called) = match plan.and_then(|r| r.outcome.as_ref().map(|o| (r, o))) {
            Some((r, o)) => (o.evidence, o.hops_used, r.tool_times.iter().map(|(_, t)| *t).collect()),
            None => (EvidenceState::default(), 0, Vec::new()),
        };
        let gt = Some(scenario.ground_truth.as_str());
        let success = task_success(scenario.kind.query_class(), &response, gt, &evidence).unwrap_or(false);

        QueryOutcome {
            trace: ExecutionTrace {
                query_id: scenario.query_id.clone(),
                band: scenario.label.band(),
                mode,
                events: tl.finish(),
                lane_used,
                talker_tokens_k: talker_tokens as f64 / 1000.0,
                planner_tokens_k: planner_tokens as f64 / 1000.0,
                gate_outcome: gate,
                gate_annotation: annotation,
                latency_ms,
                route,
                router_confidence: confidence,
                tool_action,
                tools_called,
                hops_used,
                evidence,
                probe,
                task_success: success,
            },
            response,
            features,
        }
    }
}

/// Runs every scenario once, each with its own derived seed.
pub fn run_suite<P: Policy + ?Sized>(engine: &Engine, suite: &ScenarioSuite, policy: &P, mode: Mode, seed: u64) -> Vec<QueryOutcome> {
    suite
        .scenarios
        .iter()
        .map(|s| engine.handle_query(s, policy, mode, query_seed(seed, &s.query_id)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: Mode,
    /// Task success rate.
    pub quality_proxy: f64,
    pub p50_s: f64,
    pub p90_s: f64,
    pub mean_tokens_k: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub suite: String,
    pub seed: u64,
    pub modes: Vec<ModeReport>,
}

impl AblationReport {
    pub fn get(&self, mode: Mode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

pub fn mode_report(mode: Mode, traces: &[ExecutionTrace]) -> Result<ModeReport, OrchestratorError> {
    if traces.is_empty() {
        return Err(OrchestratorError::EmptyTraces);
    }
    let lat: Vec<f64> = traces.iter().map(|t| t.latency_ms / 1000.0).collect();
    let n = traces.len() as f64;
    Ok(ModeReport {
        mode,
        quality_proxy: traces.iter().filter(|t| t.task_success).count() as f64 / n,
        p50_s: nearest_rank(&lat, 50.0),
        p90_s: nearest_rank(&lat, 90.0),
        mean_tokens_k: traces.iter().map(ExecutionTrace::tokens_k).sum::<f64>() / n,
        n: traces.len(),
    })
}

pub fn run_ablation<P: Policy + ?Sized>(
    engine: &Engine,
    suite: &ScenarioSuite,
    policy: &P,
    modes: &[Mode],
    seed: u64,
) -> Result<AblationReport, OrchestratorError> {
    if suite.scenarios.is_empty() {
        return Err(OrchestratorError::EmptySuite);
    }
    let modes = modes
        .iter()
        .map(|&m| {
            let traces: Vec<ExecutionTrace> = run_suite(engine, suite, policy, m, seed).into_iter().map(|o| o.trace).collect();
            mode_report(m, &traces)
        })
        .collect::<Result<_, _>>()?;
    Ok(AblationReport {
        suite: suite.name.clone(),
        seed,
        modes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentile {
    pub p: f64,
    pub value_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandLatency {
    pub n: usize,
    pub percentiles: Vec<Percentile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloCheck {
    pub p50_s: f64,
    pub p90_s: f64,
    pub p50_ok: bool,
    pub p90_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub overall: BandLatency,
    pub per_band: BTreeMap<Band, BandLatency>,
    pub talker_tokens_k_mean: f64,
    pub planner_tokens_k_mean: f64,
    /// Budgets for the low band; absent when no low-band traces exist.
    pub simple_slo: Option<SloCheck>,
}

fn band_latency(lat: &[f64], percentiles: &[f64]) -> BandLatency {
    BandLatency {
        n: lat.len(),
        percentiles: percentiles
            .iter()
            .map(|&p| Percentile {
                p,
                value_s: nearest_rank(lat, p),
            })
            .collect(),
    }
}

/// Nearest-rank latency percentiles (seconds) overall and per band, mean
/// token cost per lane, and the simple-query budget check.
pub fn latency_stats(traces: &[ExecutionTrace], percentiles: &[f64]) -> Result<LatencyStats, OrchestratorError> {
    if traces.is_empty() {
        return Err(OrchestratorError::EmptyTraces);
    }
    let lat = |ts: &mut dyn Iterator<Item = &ExecutionTrace>| ts.map(|t| t.latency_ms / 1000.0).collect::<Vec<_>>();
    let mut per_band = BTreeMap::new();
    for band in Band::ALL {
        let l = lat(&mut traces.iter().filter(|t| t.band == band));
        if !l.is_empty() {
            per_band.insert(band, band_latency(&l, percentiles));
        }
    }
    let simple = lat(&mut traces.iter().filter(|t| t.band == Band::Low));
    let simple_slo = (!simple.is_empty()).then(|| {
        let (p50_s, p90_s) = (nearest_rank(&simple, 50.0), nearest_rank(&simple, 90.0));
        SloCheck {
            p50_s,
            p90_s,
            p50_ok: p50_s <= SIMPLE_SLO_P50_S,
            p90_ok: p90_s <= SIMPLE_SLO_P90_S,
        }
    });
    let n = traces.len() as f64;
    Ok(LatencyStats {
        overall: band_latency(&lat(&mut traces.iter()), percentiles),
        per_band,
        talker_tokens_k_mean: traces.iter().map(|t| t.talker_tokens_k).sum::<f64>() / n,
        planner_tokens_k_mean: traces.iter().map(|t| t.planner_tokens_k).sum::<f64>() / n,
        simple_slo,
    })
}
