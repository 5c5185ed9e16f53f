//! Offline policy learning: the composite reward, TaskSuccess proxies,
//! replay collection, conservative Q-learning for both heads, and the
//! policy implementations the orchestrator runs.

use std::path::PathBuf;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::rouge_l_text;
use crate::nn::{argmax, logsumexp, softmax, Adam, Mlp};
use crate::orchestrator::{Engine, Mode, ScenarioSuite};
use crate::router::{self, FeatureVector, RouterDecision, RouterWeights, N_ROUTES};
use crate::taxonomy::{route_label, ComplexityLabel, Dk, RoutingAction};
use crate::text::splitmix64;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("replay buffer is empty")]
    EmptyReplay,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("factual query has no ground truth")]
    MissingGroundTruth,
    #[error("invalid reward spec: {0}")]
    BadRewardSpec(String),
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("tuple {index} has a non-finite reward")]
    NonFiniteReward { index: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Actions of the tool head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolAction {
    None,
    KbRetrieval,
    CrossMeeting,
    Web,
    Combo,
}

pub const N_TOOL_ACTIONS: usize = 5;

impl ToolAction {
    pub const ALL: [ToolAction; N_TOOL_ACTIONS] = [
        ToolAction::None,
        ToolAction::KbRetrieval,
        ToolAction::CrossMeeting,
        ToolAction::Web,
        ToolAction::Combo,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Concrete tools this action invokes, in call order.
    pub fn tools(self) -> &'static [ToolAction] {
        match self {
            ToolAction::None => &[],
            ToolAction::KbRetrieval => &[ToolAction::KbRetrieval],
            ToolAction::CrossMeeting => &[ToolAction::CrossMeeting],
            ToolAction::Web => &[ToolAction::Web],
            ToolAction::Combo => &[ToolAction::KbRetrieval, ToolAction::CrossMeeting, ToolAction::Web],
        }
    }
}

/// What the planner knows about available evidence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvidenceState {
    pub retrieval_confidence: f64,
    pub cross_cache_hit_rate: f64,
}

impl EvidenceState {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.retrieval_confidence) && (0.0..=1.0).contains(&self.cross_cache_hit_rate)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.retrieval_confidence, self.cross_cache_hit_rate]
    }
}

/// Weights of the composite objective. Latency is in seconds and tokens in
/// thousands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.05,
            gamma: 0.01,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if ![self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite()) || self.alpha <= 0.0 {
            return Err(PolicyError::BadRewardSpec(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn reward(&self, success: bool, latency_s: f64, tokens_k: f64) -> f64 {
        self.alpha * f64::from(u8::from(success)) - self.beta * latency_s - self.gamma * tokens_k
    }
}

/// One logged decision and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTuple {
    pub features: FeatureVector,
    pub route_action: RoutingAction,
    pub tool_action: ToolAction,
    pub task_success: bool,
    pub latency_s: f64,
    pub tokens_k: f64,
    /// Evidence state the tool head saw when it decided.
    pub evidence_state: EvidenceState,
}

pub fn compute_reward(t: &ReplayTuple, spec: &RewardSpec) -> f64 {
    spec.reward(t.task_success, t.latency_s, t.tokens_k)
}

#[derive(Serialize, Deserialize)]
struct ReplayLine {
    features: String,
    dim: usize,
    route_action: RoutingAction,
    tool_action: ToolAction,
    task_success: u8,
    latency_s: f64,
    tokens_k: f64,
    evidence_state: EvidenceState,
}

/// JSONL, one tuple per line; features are base64 little-endian f64.
pub fn emit_replay(tuples: &[ReplayTuple]) -> String {
    let mut out = String::new();
    for t in tuples {
        let bytes: Vec<u8> = t.features.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let line = ReplayLine {
            features: B64.encode(bytes),
            dim: t.features.dim(),
            route_action: t.route_action,
            tool_action: t.tool_action,
            task_success: u8::from(t.task_success),
            latency_s: t.latency_s,
            tokens_k: t.tokens_k,
            evidence_state: t.evidence_state,
        };
        out.push_str(&serde_json::to_string(&line).expect("replay serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_replay(bytes: &[u8]) -> Result<Vec<ReplayTuple>, PolicyError> {
    let text = std::str::from_utf8(bytes).map_err(|e| PolicyError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| PolicyError::Parse { line: i + 1, message };
        let l: ReplayLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let blob = B64.decode(&l.features).map_err(|e| err(e.to_string()))?;
        if blob.len() != l.dim * 8 {
            return Err(err(format!("{} feature bytes for dim {}", blob.len(), l.dim)));
        }
        let values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let t = ReplayTuple {
            features: FeatureVector::new(values),
            route_action: l.route_action,
            tool_action: l.tool_action,
            task_success: match l.task_success {
                0 => false,
                1 => true,
                v => return Err(err(format!("task_success {v}"))),
            },
            latency_s: l.latency_s,
            tokens_k: l.tokens_k,
            evidence_state: l.evidence_state,
        };
        if !(t.latency_s >= 0.0 && t.tokens_k >= 0.0) || !t.evidence_state.is_valid() {
            return Err(err("negative cost or evidence outside [0, 1]".into()));
        }
        out.push(t);
    }
    Ok(out)
}

/// The success proxy applied to a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryClass {
    Factual,
    TaskExecution,
    CrossMeeting,
}

pub const ROUGE_SUCCESS: f64 = 0.6;
pub const CROSS_HIT_SUCCESS: f64 = 0.5;

fn has_bullet(answer: &str) -> bool {
    answer.lines().any(|l| {
        let l = l.trim_start();
        l.starts_with('-') || l.starts_with('*') || l.starts_with('•')
    })
}

fn has_assignee(answer: &str) -> bool {
    let lower = answer.to_lowercase();
    let owner = lower.match_indices("owner:").any(|(i, _)| {
        lower[i + "owner:".len()..]
            .trim_start()
            .chars()
            .next()
            .is_some_and(char::is_alphanumeric)
    });
    let mention = answer
        .match_indices('@')
        .any(|(i, _)| answer[i + 1..].chars().next().is_some_and(char::is_alphanumeric));
    owner || mention
}

pub fn task_success(
    class: QueryClass,
    answer: &str,
    ground_truth: Option<&str>,
    evidence: &EvidenceState,
) -> Result<bool, PolicyError> {
    Ok(match class {
        QueryClass::Factual => {
            let gt = ground_truth.filter(|g| !g.trim().is_empty()).ok_or(PolicyError::MissingGroundTruth)?;
            rouge_l_text(answer, gt).map_err(|_| PolicyError::MissingGroundTruth)?.f > ROUGE_SUCCESS
        }
        QueryClass::TaskExecution => has_bullet(answer) && has_assignee(answer),
        QueryClass::CrossMeeting => evidence.cross_cache_hit_rate > CROSS_HIT_SUCCESS,
    })
}

/// What a policy sees for one query. `label` is the annotated complexity,
/// used only by the label-driven baseline; `nonce` varies per run so
/// stochastic policies stay reproducible.
#[derive(Debug, Clone, Copy)]
pub struct PolicyInput<'a> {
    pub features: &'a FeatureVector,
    pub label: &'a ComplexityLabel,
    pub nonce: u64,
}

pub trait Policy {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision;
    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction;
}

fn one_hot(action: RoutingAction) -> RouterDecision {
    let mut logits = [0.0; N_ROUTES];
    logits[action.index()] = 1.0;
    RouterDecision {
        action,
        confidence: 1.0,
        logits,
    }
}

/// The same action pair for every query, at full confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPolicy {
    pub route: RoutingAction,
    pub tool: ToolAction,
}

impl Policy for ConstantPolicy {
    fn route(&self, _: &PolicyInput<'_>) -> RouterDecision {
        one_hot(self.route)
    }

    fn tool(&self, _: &PolicyInput<'_>, _: &EvidenceState) -> ToolAction {
        self.tool
    }
}

/// Evidence-threshold tool rule shared by the baselines.
pub fn rule_tool(label: &ComplexityLabel, evidence: &EvidenceState) -> ToolAction {
    if evidence.cross_cache_hit_rate > CROSS_HIT_SUCCESS {
        ToolAction::CrossMeeting
    } else if evidence.retrieval_confidence >= 0.99 {
        ToolAction::KbRetrieval
    } else if label.dk == Dk::Expert {
        ToolAction::Web
    } else {
        ToolAction::None
    }
}

/// Heuristic baseline: routes by the annotated label and picks tools by
/// evidence thresholds.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelPolicy;

impl Policy for LabelPolicy {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        one_hot(route_label(input.label))
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        rule_tool(input.label, evidence)
    }
}

/// Two trained heads.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub router: RouterWeights,
    pub tool: Mlp,
}

impl Policy for LearnedPolicy {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        router::forward(&self.router, input.features).expect("router matches feature dim")
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        select_tool(&self.tool, input.features, evidence).expect("tool head matches feature dim")
    }
}

/// Supervised router with the rule tool head; the default behavior policy.
#[derive(Debug, Clone)]
pub struct RouterWithRules {
    pub router: RouterWeights,
}

impl Policy for RouterWithRules {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        router::forward(&self.router, input.features).expect("router matches feature dim")
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        rule_tool(input.label, evidence)
    }
}

/// Reports full confidence for whatever the inner policy picks, so its
/// decisions bypass the sentinel gate.
#[derive(Debug, Clone, Copy)]
pub struct Confident<P>(pub P);

impl<P: Policy> Policy for Confident<P> {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        RouterDecision {
            confidence: 1.0,
            ..self.0.route(input)
        }
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        self.0.tool(input, evidence)
    }
}

/// With probability `epsilon` per head, a uniformly random action.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonGreedy<P> {
    pub inner: P,
    pub epsilon: f64,
}

impl<P> EpsilonGreedy<P> {
    fn draw(nonce: u64, salt: u64) -> (f64, u64) {
        let h = splitmix64(nonce ^ salt);
        ((h >> 11) as f64 / (1u64 << 53) as f64, splitmix64(h))
    }
}

impl<P: Policy> Policy for EpsilonGreedy<P> {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        let (u, pick) = Self::draw(input.nonce, 0x5ead);
        if u < self.epsilon {
            one_hot(RoutingAction::ALL[(pick % N_ROUTES as u64) as usize])
        } else {
            self.inner.route(input)
        }
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        let (u, pick) = Self::draw(input.nonce, 0x7001);
        if u < self.epsilon {
            ToolAction::ALL[(pick % N_TOOL_ACTIONS as u64) as usize]
        } else {
            self.inner.tool(input, evidence)
        }
    }
}

/// Tool-head input: features followed by the two evidence values.
pub fn tool_input(features: &FeatureVector, evidence: &EvidenceState) -> Vec<f64> {
    let mut x = features.values.clone();
    x.extend(evidence.as_array());
    x
}

pub fn init_tool_head<R: Rng + ?Sized>(feature_dim: usize, hidden: usize, rng: &mut R) -> Mlp {
    Mlp::init(feature_dim + 2, hidden, N_TOOL_ACTIONS, rng)
}

/// Greedy tool choice; ties go to the lowest index.
pub fn select_tool(weights: &Mlp, features: &FeatureVector, evidence: &EvidenceState) -> Result<ToolAction, PolicyError> {
    if weights.input != features.dim() + 2 || weights.outputs != N_TOOL_ACTIONS {
        return Err(PolicyError::DimMismatch {
            expected: weights.input,
            got: features.dim() + 2,
        });
    }
    let q = weights.logits(&tool_input(features, evidence));
    Ok(ToolAction::from_index(argmax(&q)).expect("five outputs"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqlConfig {
    pub lambda_cql: f64,
    pub epochs: usize,
    /// Adam learning rate.
    pub step: f64,
    pub batch: usize,
    pub heldout_frac: f64,
    pub seed: u64,
}

impl Default for CqlConfig {
    fn default() -> Self {
        Self {
            lambda_cql: 0.5,
            epochs: 10,
            step: 1e-3,
            batch: 64,
            heldout_frac: 0.2,
            seed: 0,
        }
    }
}

impl CqlConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(PolicyError::BadConfig("epochs and batch must be at least 1".into()));
        }
        if !(self.lambda_cql.is_finite() && self.lambda_cql >= 0.0) || !(self.step.is_finite() && self.step > 0.0) {
            return Err(PolicyError::BadConfig(format!("lambda {} step {}", self.lambda_cql, self.step)));
        }
        if !(0.0..1.0).contains(&self.heldout_frac) {
            return Err(PolicyError::BadConfig(format!("heldout_frac {}", self.heldout_frac)));
        }
        Ok(())
    }
}

/// Squared TD error to the one-step reward plus the conservative penalty.
/// Returns the loss and the penalty term; adds `scale · ∂loss/∂θ` to `grad`.
fn cql_accumulate(w: &Mlp, x: &[f64], logged: usize, reward: f64, lambda: f64, scale: f64, grad: &mut Mlp) -> (f64, f64) {
    let (hidden, q) = w.forward(x);
    let td = q[logged] - reward;
    let penalty = logsumexp(&q) - q[logged];
    let p = softmax(&q);
    let dq: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(k, pk)| {
            let hit = if k == logged { 1.0 } else { 0.0 };
            2.0 * td * hit + lambda * (pk - hit)
        })
        .collect();
    w.backward(x, &hidden, &dq, scale, grad);
    (td * td + lambda * penalty, penalty)
}

pub fn cql_loss_and_grad(w: &Mlp, x: &[f64], logged: usize, reward: f64, lambda: f64) -> Result<(f64, Mlp), PolicyError> {
    if x.len() != w.input {
        return Err(PolicyError::DimMismatch {
            expected: w.input,
            got: x.len(),
        });
    }
    assert!(logged < w.outputs, "logged action out of range");
    let mut grad = w.zeros_like();
    let (loss, _) = cql_accumulate(w, x, logged, reward, lambda, 1.0, &mut grad);
    Ok((loss, grad))
}

/// Plain CQL loss, for finite differences.
pub fn cql_loss(w: &Mlp, x: &[f64], logged: usize, reward: f64, lambda: f64) -> f64 {
    let q = w.logits(x);
    (q[logged] - reward).powi(2) + lambda * (logsumexp(&q) - q[logged])
}

#[derive(Debug, Clone)]
pub struct CqlReport {
    pub router: RouterWeights,
    pub tool: Mlp,
    /// Mean loss per head, before training and after each epoch.
    pub router_losses: Vec<f64>,
    pub tool_losses: Vec<f64>,
    /// Smallest conservative penalty seen in any batch; never negative.
    pub min_penalty: f64,
    /// Logged mean reward on the held-out tuples.
    pub heldout_behavior_value: Option<f64>,
    /// Mean held-out reward over tuples whose logged actions match the
    /// greedy choice of the initial / trained heads.
    pub pre_greedy_value: Option<f64>,
    pub post_greedy_value: Option<f64>,
    pub train_idx: Vec<usize>,
    pub heldout_idx: Vec<usize>,
}

fn greedy_value(router: &Mlp, tool: &Mlp, tuples: &[&ReplayTuple], rewards: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (t, r) in tuples.iter().zip(rewards) {
        let route = argmax(&router.logits(&t.features.values));
        let tool_a = argmax(&tool.logits(&tool_input(&t.features, &t.evidence_state)));
        if route == t.route_action.index() && tool_a == t.tool_action.index() {
            total += r;
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}

/// Trains the routing head and the tool head on logged one-step outcomes,
/// treating each head's outputs as Q-values regressed onto the reward.
pub fn train_cql(
    replay: &[ReplayTuple],
    router_init: &RouterWeights,
    tool_init: &Mlp,
    cfg: &CqlConfig,
    spec: &RewardSpec,
) -> Result<CqlReport, PolicyError> {
    if replay.is_empty() {
        return Err(PolicyError::EmptyReplay);
    }
    cfg.validate()?;
    spec.validate()?;
    let dim = router_init.input;
    if router_init.outputs != N_ROUTES {
        return Err(PolicyError::DimMismatch {
            expected: N_ROUTES,
            got: router_init.outputs,
        });
    }
    if tool_init.input != dim + 2 || tool_init.outputs != N_TOOL_ACTIONS {
        return Err(PolicyError::DimMismatch {
            expected: dim + 2,
            got: tool_init.input,
        });
    }
    if let Some(t) = replay.iter().find(|t| t.features.dim() != dim) {
        return Err(PolicyError::DimMismatch {
            expected: dim,
            got: t.features.dim(),
        });
    }
    let rewards: Vec<f64> = replay.iter().map(|t| compute_reward(t, spec)).collect();
    if let Some(index) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(PolicyError::NonFiniteReward { index });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..replay.len()).collect();
    order.shuffle(&mut rng);
    let n_held = if replay.len() >= 10 {
        (replay.len() as f64 * cfg.heldout_frac).floor() as usize
    } else {
        0
    };
    let mut heldout_idx = order[..n_held].to_vec();
    let mut train_idx = order[n_held..].to_vec();

    let tool_x: Vec<Vec<f64>> = replay.iter().map(|t| tool_input(&t.features, &t.evidence_state)).collect();
    let mut router = router_init.clone();
    let mut tool = tool_init.clone();
    let mut adam_r = Adam::new(&router, cfg.step);
    let mut adam_t = Adam::new(&tool, cfg.step);
    let lambda = cfg.lambda_cql;

    let mean_losses = |router: &Mlp, tool: &Mlp, idx: &[usize]| -> (f64, f64) {
        let n = idx.len() as f64;
        let (mut lr, mut lt) = (0.0, 0.0);
        for &i in idx {
            let t = &replay[i];
            lr += cql_loss(router, &t.features.values, t.route_action.index(), rewards[i], lambda);
            lt += cql_loss(tool, &tool_x[i], t.tool_action.index(), rewards[i], lambda);
        }
        (lr / n, lt / n)
    };
    let (r0, t0) = mean_losses(&router, &tool, &train_idx);
    let mut router_losses = vec![r0];
    let mut tool_losses = vec![t0];
    let mut min_penalty = f64::INFINITY;

    for _ in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch) {
            let scale = 1.0 / chunk.len() as f64;
            let mut g_r = router.zeros_like();
            let mut g_t = tool.zeros_like();
            for &i in chunk {
                let t = &replay[i];
                let (_, pen_r) =
                    cql_accumulate(&router, &t.features.values, t.route_action.index(), rewards[i], lambda, scale, &mut g_r);
                let (_, pen_t) = cql_accumulate(&tool, &tool_x[i], t.tool_action.index(), rewards[i], lambda, scale, &mut g_t);
                min_penalty = min_penalty.min(pen_r).min(pen_t);
            }
            adam_r.step(&mut router, &g_r);
            adam_t.step(&mut tool, &g_t);
        }
        let (lr, lt) = mean_losses(&router, &tool, &train_idx);
        router_losses.push(lr);
        tool_losses.push(lt);
    }

    train_idx.sort_unstable();
    heldout_idx.sort_unstable();
    let held: Vec<&ReplayTuple> = heldout_idx.iter().map(|&i| &replay[i]).collect();
    let held_r: Vec<f64> = heldout_idx.iter().map(|&i| rewards[i]).collect();
    Ok(CqlReport {
        heldout_behavior_value: (!held.is_empty()).then(|| held_r.iter().sum::<f64>() / held_r.len() as f64),
        pre_greedy_value: greedy_value(router_init, tool_init, &held, &held_r),
        post_greedy_value: greedy_value(&router, &tool, &held, &held_r),
        router,
        tool,
        router_losses,
        tool_losses,
        min_penalty,
        train_idx,
        heldout_idx,
    })
}

/// Runs the behavior policy over randomly drawn scenarios and logs one
/// tuple per query. The behavior policy's choices are executed as-is
/// (no sentinel gating), so the log records what was actually done.
pub fn collect_replay<P: Policy>(
    suite: &ScenarioSuite,
    behavior: &P,
    engine: &Engine,
    n: usize,
    seed: u64,
) -> Result<Vec<ReplayTuple>, PolicyError> {
    if n == 0 {
        return Err(PolicyError::BadConfig("n must be at least 1".into()));
    }
    if suite.scenarios.is_empty() {
        return Err(PolicyError::BadConfig("suite has no scenarios".into()));
    }
    let policy = Confident(behavior);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s = &suite.scenarios[rng.random_range(0..suite.scenarios.len())];
        let run_seed: u64 = rng.random();
        let outcome = engine.handle_query(s, &policy, Mode::Parallel, run_seed);
        let tr = &outcome.trace;
        out.push(ReplayTuple {
            features: outcome.features,
            route_action: tr.route,
            tool_action: tr.tool_action,
            task_success: tr.task_success,
            latency_s: tr.latency_ms / 1000.0,
            tokens_k: tr.tokens_k(),
            evidence_state: tr.probe,
        });
    }
    Ok(out)
}

impl<P: Policy + ?Sized> Policy for &P {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        (**self).route(input)
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        (**self).tool(input, evidence)
    }
}

/// Averages over a suite, every scenario run once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub mean_reward: f64,
    pub success_rate: f64,
    pub mean_latency_s: f64,
    pub mean_tokens_k: f64,
    /// Fraction of queries that invoked at least one tool.
    pub tool_call_rate: f64,
    pub n: usize,
}

/// Counterfactual evaluation: each scenario's random draws depend only on
/// `seed` and its query id, so policies compared on the same seed face
/// identical conditions.
pub fn evaluate_policy<P: Policy>(
    suite: &ScenarioSuite,
    policy: &P,
    engine: &Engine,
    mode: Mode,
    seed: u64,
    spec: &RewardSpec,
) -> PolicyValue {
    let mut v = PolicyValue {
        mean_reward: 0.0,
        success_rate: 0.0,
        mean_latency_s: 0.0,
        mean_tokens_k: 0.0,
        tool_call_rate: 0.0,
        n: suite.scenarios.len(),
    };
    for s in &suite.scenarios {
        let tr = engine.handle_query(s, policy, mode, crate::orchestrator::query_seed(seed, &s.query_id)).trace;
        let lat = tr.latency_ms / 1000.0;
        v.mean_reward += spec.reward(tr.task_success, lat, tr.tokens_k());
        v.success_rate += f64::from(u8::from(tr.task_success));
        v.mean_latency_s += lat;
        v.mean_tokens_k += tr.tokens_k();
        v.tool_call_rate += f64::from(u8::from(!tr.tools_called.is_empty()));
    }
    let n = v.n.max(1) as f64;
    v.mean_reward /= n;
    v.success_rate /= n;
    v.mean_latency_s /= n;
    v.mean_tokens_k /= n;
    v.tool_call_rate /= n;
    v
}
