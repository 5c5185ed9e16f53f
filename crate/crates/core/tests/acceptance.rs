//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each check carries its own oracle.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use dualpilot::corpus::{
    class_distribution, inject_query, injection_offsets, schedule_injections, segment, verify_splits, Split,
    SplitAssignment, Transcript, Turn,
};
use dualpilot::evalkit::{
    apply_map, bca_interval, chi_square_gof, cohens_kappa, kendall_tau_b, pareto_frontier, pava_fit, pearson,
    permutation_p, rouge_l, spearman, KappaWeighting, ParetoPoint,
};
use dualpilot::nn::Mlp;
use dualpilot::orchestrator::{
    generate_suite, latency_stats, run_ablation, run_suite, Engine, GateAnnotation, Mode, ScenarioKind, SuiteKind,
};
use dualpilot::policy::{
    collect_replay, cql_loss, cql_loss_and_grad, evaluate_policy, init_tool_head, rule_tool, task_success, train_cql,
    Confident, ConstantPolicy, CqlConfig, EpsilonGreedy, EvidenceState, LabelPolicy, LearnedPolicy, Policy,
    PolicyInput, QueryClass, ReplayTuple, RewardSpec, RouterWithRules, ToolAction, N_TOOL_ACTIONS,
};
use dualpilot::router::{
    focal_loss, focal_loss_and_grad, init_router, train_supervised, FeatureVector, FocalConfig, PrototypeSet,
    RouterDecision, TrainConfig, DEFAULT_DIM, HIDDEN, N_ROUTES,
};
use dualpilot::taxonomy::{route_label, Band, Cd, Cl, ClassDistribution, ClassMapping, ComplexityLabel, Dk, RoutingAction, Te};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(started: Instant, budget: Duration, what: &str) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took <= budget, || format!("{what} took {took:.2?}, budget {budget:?}"))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference
/// gradients over all parameters.
fn worst_gradient_error(w: &Mlp, analytic: &Mlp, loss: impl Fn(&Mlp) -> f64) -> f64 {
    let h = 1e-5;
    let an: Vec<f64> = analytic.params().collect();
    let mut worst: f64 = 0.0;
    for (idx, a) in an.iter().enumerate() {
        let mut plus = w.clone();
        *plus.param_mut(idx) += h;
        let mut minus = w.clone();
        *minus.param_mut(idx) -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        if a.abs() < 1e-8 && fd.abs() < 1e-8 {
            continue;
        }
        worst = worst.max(rel_err(*a, fd));
    }
    worst
}

fn gradient_correctness() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_focal: f64 = 0.0;
    let mut worst_cql: f64 = 0.0;
    for case in 0..100 {
        let input = rng.random_range(3..9);
        let hidden = rng.random_range(2..7);
        let w = Mlp::init(input, hidden, N_ROUTES, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = case % N_ROUTES;

        let mut cfg = FocalConfig::uniform(N_ROUTES, rng.random_range(0.0..3.0));
        cfg.class_weights = (0..N_ROUTES).map(|_| rng.random_range(0.2..2.0)).collect();
        let fx = FeatureVector::new(x.clone());
        let (_, g) = focal_loss_and_grad(&w, &fx, label, &cfg).map_err(|e| e.to_string())?;
        worst_focal = worst_focal.max(worst_gradient_error(&w, &g, |m| focal_loss(m, &fx, label, &cfg)));

        let reward = rng.random_range(-1.0..1.0);
        let lambda = rng.random_range(0.0..2.0);
        let (_, g) = cql_loss_and_grad(&w, &x, label, reward, lambda).map_err(|e| e.to_string())?;
        worst_cql = worst_cql.max(worst_gradient_error(&w, &g, |m| cql_loss(m, &x, label, reward, lambda)));
    }
    ensure(worst_focal < 1e-5, || format!("focal gradient relative error {worst_focal:e}"))?;
    ensure(worst_cql < 1e-5, || format!("CQL gradient relative error {worst_cql:e}"))?;
    within_budget(started, Duration::from_secs(5), "gradient check")?;
    Ok(format!("max rel err focal {worst_focal:.1e}, cql {worst_cql:.1e} over 100 configs"))
}

fn routing_capacity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = init_router(DEFAULT_DIM, &mut rng).param_count();
    let expected = DEFAULT_DIM * HIDDEN + HIDDEN + HIDDEN * N_ROUTES + N_ROUTES;
    ensure(params == expected && params == 297_476, || format!("{params} parameters, expected 297476"))?;

    let started = Instant::now();
    let data = PrototypeSet::separable(5000, DEFAULT_DIM, 7).generate();
    let head = train_supervised(&data, &TrainConfig { seed: 1, ..TrainConfig::default() }).map_err(|e| e.to_string())?;
    let acc = head.heldout_accuracy.ok_or("no held-out split")?;
    ensure(acc >= 0.95, || format!("held-out accuracy {acc:.4} < 0.95"))?;
    within_budget(started, Duration::from_secs(60), "supervised training")?;
    Ok(format!("{params} parameters, held-out accuracy {acc:.4} in {:.1?}", started.elapsed()))
}

/// One feature vector, logged rewards spread symmetrically around fixed
/// per-action means so the empirical means are known exactly.
fn tabular_replay(logged: &[usize]) -> Vec<ReplayTuple> {
    let means = [0.95, 0.50, 0.30, 0.10];
    let spec = RewardSpec::default();
    let mut out = Vec::new();
    for &a in logged {
        for d in [-0.05, 0.05] {
            // success with zero tokens: reward = 1 - beta * latency
            out.push(ReplayTuple {
                features: FeatureVector::new(vec![1.0, 0.0, 0.5]),
                route_action: RoutingAction::from_index(a).expect("route index"),
                tool_action: ToolAction::None,
                task_success: true,
                latency_s: (spec.alpha - (means[a] + d)) / spec.beta,
                tokens_k: 0.0,
                evidence_state: EvidenceState::default(),
            });
        }
    }
    out
}

fn tabular_q(replay: &[ReplayTuple], lambda: f64) -> Result<Vec<f64>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let router = Mlp::init(3, 8, N_ROUTES, &mut rng);
    let tool = Mlp::init(3 + 2, 4, N_TOOL_ACTIONS, &mut rng);
    let cfg = CqlConfig {
        lambda_cql: lambda,
        epochs: 4000,
        step: 1e-2,
        batch: replay.len(),
        heldout_frac: 0.0,
        seed: 1,
    };
    let rep = train_cql(replay, &router, &tool, &cfg, &RewardSpec::default()).map_err(|e| e.to_string())?;
    Ok(rep.router.logits(&replay[0].features.values))
}

fn cql_oracle() -> Check {
    let spec = RewardSpec::default();
    let replay = tabular_replay(&[0, 1, 2, 3]);
    let mut sums = [0.0; N_ROUTES];
    let mut counts = [0.0; N_ROUTES];
    for t in &replay {
        sums[t.route_action.index()] += spec.reward(t.task_success, t.latency_s, t.tokens_k);
        counts[t.route_action.index()] += 1.0;
    }
    let q = tabular_q(&replay, 0.0)?;
    let mut worst: f64 = 0.0;
    for a in 0..N_ROUTES {
        worst = worst.max((q[a] - sums[a] / counts[a]).abs());
    }
    ensure(worst < 1e-3, || format!("lambda=0 Q {q:?} misses empirical means by {worst:e}"))?;

    let partial = tabular_replay(&[0, 1]);
    let plain = tabular_q(&partial, 0.0)?;
    let conservative = tabular_q(&partial, 0.5)?;
    for a in [2, 3] {
        ensure(conservative[a] < plain[a], || {
            format!("unlogged action {a}: lambda=0.5 Q {} not below lambda=0 Q {}", conservative[a], plain[a])
        })?;
    }
    Ok(format!(
        "max |Q - mean| {worst:.1e}; unlogged Q {:.3}/{:.3} -> {:.3}/{:.3}",
        plain[2], plain[3], conservative[2], conservative[3]
    ))
}

fn policy_dominance() -> Check {
    let started = Instant::now();
    let mapping = ClassMapping::default_mapping();
    let train = generate_suite(SuiteKind::Mixed, 600, 11, &mapping).map_err(|e| e.to_string())?;
    let eval = generate_suite(SuiteKind::Mixed, 300, 12, &mapping).map_err(|e| e.to_string())?;
    let engine = Engine::for_suite(&train);
    let data: Vec<(FeatureVector, RoutingAction)> =
        train.scenarios.iter().map(|s| (engine.features(s), route_label(&s.label))).collect();
    let router = train_supervised(&data, &TrainConfig { epochs: 8, seed: 1, ..TrainConfig::default() })
        .map_err(|e| e.to_string())?
        .weights;
    let behavior = EpsilonGreedy { inner: RouterWithRules { router: router.clone() }, epsilon: 0.3 };
    let replay = collect_replay(&train, &behavior, &engine, 3000, 5).map_err(|e| e.to_string())?;
    let tool = init_tool_head(DEFAULT_DIM, 64, &mut ChaCha8Rng::seed_from_u64(3));
    let spec = RewardSpec::default();
    let rep = train_cql(&replay, &router, &tool, &CqlConfig { epochs: 10, seed: 2, ..CqlConfig::default() }, &spec)
        .map_err(|e| e.to_string())?;

    let eval_engine = Engine::for_suite(&eval);
    let learned = Confident(LearnedPolicy { router: rep.router, tool: rep.tool });
    let j = evaluate_policy(&eval, &learned, &eval_engine, Mode::Parallel, 7, &spec).mean_reward;
    let mut best = (f64::NEG_INFINITY, RoutingAction::Fast, ToolAction::None);
    for route in RoutingAction::ALL {
        for tool in ToolAction::ALL {
            let c = evaluate_policy(&eval, &ConstantPolicy { route, tool }, &eval_engine, Mode::Parallel, 7, &spec);
            if c.mean_reward > best.0 {
                best = (c.mean_reward, route, tool);
            }
        }
    }
    ensure(j > best.0, || format!("learned J {j:.4} <= best constant {:?}/{:?} J {:.4}", best.1, best.2, best.0))?;
    within_budget(started, Duration::from_secs(120), "policy pipeline")?;
    Ok(format!("learned J {j:.4} > best constant {:?}/{:?} J {:.4}", best.1, best.2, best.0))
}

/// Label routing with rule tools, reported at a confidence that leaves
/// the decision to the sentinel.
struct Hesitant;

impl Policy for Hesitant {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        RouterDecision { action: route_label(input.label), confidence: 0.5, logits: [0.0; N_ROUTES] }
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        rule_tool(input.label, evidence)
    }
}

fn gate_semantics() -> Check {
    let started = Instant::now();
    let suite = generate_suite(SuiteKind::Simple, 50, 5, &ClassMapping::default_mapping()).map_err(|e| e.to_string())?;
    let engine = Engine::for_suite(&suite);
    ensure(
        (engine.timing.sentinel.p_late - 0.031).abs() < 1e-12 && (engine.timing.sentinel.p_absent - 0.018).abs() < 1e-12,
        || "default sentinel model does not match the configured rates".into(),
    )?;
    let trials = 5000;
    let (mut late, mut miss) = (0usize, 0usize);
    for i in 0..trials {
        let s = &suite.scenarios[i % suite.scenarios.len()];
        debug_assert_eq!(s.kind, ScenarioKind::Simple);
        match engine.handle_query(s, &Hesitant, Mode::Parallel, 1_000 + i as u64).trace.gate_annotation {
            Some(GateAnnotation::LateTrigger) => late += 1,
            Some(GateAnnotation::MissTrigger) => miss += 1,
            None => {}
        }
    }
    let (late_rate, miss_rate) = (late as f64 / trials as f64, miss as f64 / trials as f64);
    ensure((late_rate - 0.031).abs() <= 0.005, || format!("late-trigger rate {late_rate:.4}"))?;
    ensure((miss_rate - 0.018).abs() <= 0.005, || format!("miss-trigger rate {miss_rate:.4}"))?;
    within_budget(started, Duration::from_secs(10), "gate trials")?;
    Ok(format!("late {late_rate:.4} (target 0.031), miss {miss_rate:.4} (target 0.018) over {trials} trials"))
}

fn ablation_structure() -> Check {
    let mapping = ClassMapping::default_mapping();
    let mut rows = Vec::new();
    for seed in 1..=10u64 {
        let suite = generate_suite(SuiteKind::Mixed, 300, seed, &mapping).map_err(|e| e.to_string())?;
        let engine = Engine::for_suite(&suite);
        let r = run_ablation(&engine, &suite, &LabelPolicy, &Mode::ALL, seed).map_err(|e| e.to_string())?;
        let get = |m: Mode| r.get(m).cloned().ok_or(format!("mode {m} missing"));
        let (par, ser, ro, to) = (get(Mode::Parallel)?, get(Mode::Serial)?, get(Mode::RoutingOnly)?, get(Mode::ToolsOnly)?);
        ensure(par.p90_s <= ser.p90_s, || format!("seed {seed}: parallel P90 {:.3} > serial {:.3}", par.p90_s, ser.p90_s))?;
        ensure(ro.p50_s < to.p50_s, || format!("seed {seed}: routing-only P50 {:.3} >= tools-only {:.3}", ro.p50_s, to.p50_s))?;
        ensure(par.quality_proxy >= ro.quality_proxy, || {
            format!("seed {seed}: parallel quality {:.3} < routing-only {:.3}", par.quality_proxy, ro.quality_proxy)
        })?;
        rows.push((par.p90_s - ser.p90_s, to.p50_s - ro.p50_s, par.quality_proxy - ro.quality_proxy));
    }
    let min = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(format!(
        "seeds 1..10: min serial-parallel P90 gap {:.3}s, min tools-routing P50 gap {:.3}s, min quality gain {:.3}",
        -rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
        min(|r| r.1),
        min(|r| r.2)
    ))
}

fn latency_model() -> Check {
    let mapping = ClassMapping::default_mapping();
    let mut p50 = BTreeMap::new();
    for (kind, target) in [(SuiteKind::Simple, 0.92), (SuiteKind::Complex, 18.9)] {
        let suite = generate_suite(kind, 300, 1, &mapping).map_err(|e| e.to_string())?;
        let engine = Engine::for_suite(&suite);
        let traces: Vec<_> = run_suite(&engine, &suite, &LabelPolicy, Mode::Parallel, 1).into_iter().map(|o| o.trace).collect();
        let stats = latency_stats(&traces, &[50.0]).map_err(|e| e.to_string())?;
        let got = stats.overall.percentiles[0].value_s;
        ensure((got - target).abs() <= 0.1 * target, || format!("{kind} P50 {got:.3}s outside ±10% of {target}s"))?;
        p50.insert(kind.to_string(), got);
    }
    Ok(format!("simple P50 {:.3}s (0.92 ±10%), complex P50 {:.2}s (18.9 ±10%)", p50["simple"], p50["complex"]))
}

/// Minimum squared error over all non-decreasing sequences with values on
/// the 0.1 grid of `[0, 1]`.
fn best_grid_step(ys: &[f64]) -> f64 {
    fn go(ys: &[f64], min_level: usize, acc: f64, best: &mut f64) {
        if acc >= *best {
            return;
        }
        let Some((&y, rest)) = ys.split_first() else {
            *best = acc;
            return;
        };
        for level in min_level..=10 {
            let v = level as f64 / 10.0;
            go(rest, level, acc + (y - v).powi(2), best);
        }
    }
    let mut best = f64::INFINITY;
    go(ys, 0, 0.0, &mut best);
    best
}

fn pava_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut slack = f64::INFINITY;
    for case in 0..1000 {
        let n = 2 + case % 5;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 + rng.random_range(0.0..0.5)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let map = pava_fit(&xs, &ys).map_err(|e| e.to_string())?;
        let sse: f64 = xs.iter().zip(&ys).map(|(&x, &y)| (apply_map(&map, x) - y).powi(2)).sum();
        let grid = best_grid_step(&ys);
        ensure(sse <= grid + 1e-12, || format!("case {case}: PAVA SSE {sse} > grid step SSE {grid}"))?;
        slack = slack.min(grid - sse);
    }
    Ok(format!("1000 cases, n in 2..=6, smallest margin to best grid step {slack:.2e}"))
}

fn pearson_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn calibration_benefit() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let noise = Normal::new(0.0, 0.15).map_err(|e| e.to_string())?;
    // strongly convex monotone link on [1, 10]
    let g = |x: f64| 1.0 + 9.0 * ((x - 1.0) / 9.0).powi(4);
    let mut draw = |n: usize| -> (Vec<f64>, Vec<f64>) {
        let auto: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let human = auto.iter().map(|&a| g(a) + noise.inverse_cdf(rng.random_range(1e-9..1.0 - 1e-9))).collect();
        (auto, human)
    };
    let (train_a, train_h) = draw(400);
    let (test_a, test_h) = draw(400);
    let map = pava_fit(&train_a, &train_h).map_err(|e| e.to_string())?;
    let calibrated: Vec<f64> = test_a.iter().map(|&a| apply_map(&map, a)).collect();
    let raw = pearson_oracle(&test_a, &test_h);
    let cal = pearson_oracle(&calibrated, &test_h);
    ensure(cal - raw >= 0.03, || format!("held-out Pearson {raw:.4} -> {cal:.4}, gain below 0.03"))?;
    Ok(format!("held-out Pearson {raw:.4} -> {cal:.4} (+{:.4})", cal - raw))
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Textbook BCa over every one of the n^n resamples of the mean.
fn bca_mean_oracle(xs: &[f64], alpha: f64) -> (f64, f64) {
    let n = xs.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let theta = mean(xs);
    let mut reps = Vec::with_capacity(n.pow(n as u32));
    for code in 0..n.pow(n as u32) {
        let mut c = code;
        let mut s = 0.0;
        for _ in 0..n {
            s += xs[c % n];
            c /= n;
        }
        reps.push(s / n as f64);
    }
    reps.sort_by(f64::total_cmp);
    let z = Normal::new(0.0, 1.0).expect("normal");
    let below = reps.iter().filter(|r| **r < theta).count() as f64 / reps.len() as f64;
    let z0 = z.inverse_cdf(below);
    let jack: Vec<f64> = (0..n)
        .map(|k| mean(&xs.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| *v).collect::<Vec<_>>()))
        .collect();
    let jm = mean(&jack);
    let a = jack.iter().map(|j| (jm - j).powi(3)).sum::<f64>() / (6.0 * jack.iter().map(|j| (jm - j).powi(2)).sum::<f64>().powf(1.5));
    let pick = |q: f64| {
        let zq = z.inverse_cdf(q);
        let adj = z.cdf(z0 + (z0 + zq) / (1.0 - a * (z0 + zq)));
        let k = (adj * reps.len() as f64).ceil() as usize;
        reps[k.clamp(1, reps.len()) - 1]
    };
    (pick(alpha / 2.0), pick(1.0 - alpha / 2.0))
}

fn statistics_oracles() -> Check {
    let e = |r: Result<f64, dualpilot::evalkit::EvalError>| r.map_err(|e| e.to_string());
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let up = [2.0, 4.0, 6.0, 8.0, 10.0];
    let down = [5.0, 4.0, 3.0, 2.0, 1.0];
    for (name, v, want) in [
        ("pearson +", e(pearson(&x, &up))?, 1.0),
        ("pearson -", e(pearson(&x, &down))?, -1.0),
        ("spearman monotone", e(spearman(&x, &[1.0, 8.0, 27.0, 64.0, 125.0]))?, 1.0),
        ("kendall -", e(kendall_tau_b(&x, &down))?, -1.0),
        // one discordant pair out of ten
        ("kendall one swap", e(kendall_tau_b(&x, &[1.0, 2.0, 3.0, 5.0, 4.0]))?, 0.8),
        // 1 - 6·2/(5·24)
        ("spearman one swap", e(spearman(&x, &[1.0, 2.0, 3.0, 5.0, 4.0]))?, 0.9),
    ] {
        ensure((v - want).abs() < 1e-12, || format!("{name}: {v} != {want}"))?;
    }

    let ys = [2.1, 1.3, 3.8, 3.1, 5.2];
    let observed = pearson_oracle(&x, &ys).abs();
    let perms = all_permutations(5);
    let hits = perms
        .iter()
        .filter(|p| {
            let shuffled: Vec<f64> = p.iter().map(|&i| ys[i]).collect();
            pearson_oracle(&x, &shuffled).abs() >= observed - 1e-12
        })
        .count();
    let exact = hits as f64 / perms.len() as f64;
    let p = e(permutation_p(&x, &ys, pearson, 1000, 0))?;
    ensure((p - exact).abs() < 1e-15, || format!("permutation p {p} != exhaustive {exact}"))?;

    let sample = [1.0, 2.5, 2.0, 7.0, 3.5];
    let mean_stat = |a: &[f64], _: &[f64]| Ok(a.iter().sum::<f64>() / a.len() as f64);
    let ci = bca_interval(&sample, &sample, mean_stat, 3125, 0.05, 0).map_err(|e| e.to_string())?;
    let (lo, hi) = bca_mean_oracle(&sample, 0.05);
    ensure(ci.lo == lo && ci.hi == hi, || format!("BCa ({}, {}) != enumeration ({lo}, {hi})", ci.lo, ci.hi))?;

    let kappa = e(cohens_kappa(&[1, 1, 2, 2], &[1, 2, 1, 2], KappaWeighting::None))?;
    ensure(kappa.abs() < 1e-15, || format!("kappa {kappa} != 0"))?;
    let (stat, chi_p) = chi_square_gof(&[10.0, 20.0, 30.0], &[10.0, 20.0, 30.0]).map_err(|e| e.to_string())?;
    ensure(stat == 0.0 && chi_p == 1.0, || format!("chi-square ({stat}, {chi_p}) != (0, 1)"))?;
    Ok(format!("closed forms exact; perm p {exact:.4} = 120-way enumeration; BCa ({lo:.3}, {hi:.3}) = 3125 resamples"))
}

fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            t[i][j] = if a[i] == b[j] { t[i + 1][j + 1] + 1 } else { t[i + 1][j].max(t[i][j + 1]) };
        }
    }
    t[0][0]
}

fn rouge_and_success() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let vocab = ["alpha", "beta", "gamma", "delta", "budget", "owner"];
    let words = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let n = rng.random_range(1..12);
        (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
    };
    for case in 0..1000 {
        let (c, r) = (words(&mut rng), words(&mut rng));
        let got = rouge_l(&c, &r).map_err(|e| e.to_string())?;
        let l = lcs_oracle(&c, &r) as f64;
        let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
        let f = if l == 0.0 { 0.0 } else { 2.0 * p * rec / (p + rec) };
        ensure((got.precision - p).abs() < 1e-12 && (got.recall - rec).abs() < 1e-12 && (got.f - f).abs() < 1e-12, || {
            format!("case {case}: {got:?} vs LCS oracle p {p} r {rec} f {f}")
        })?;
    }

    let gt = "the budget of project aurora 42 is forty thousand";
    let none = EvidenceState::default();
    let identical = task_success(QueryClass::Factual, gt, Some(gt), &none).map_err(|e| e.to_string())?;
    let no_bullets = task_success(QueryClass::TaskExecution, "Confirm the budget, owner: alice", None, &none)
        .map_err(|e| e.to_string())?;
    let half = EvidenceState { retrieval_confidence: 0.0, cross_cache_hit_rate: 0.5 };
    let boundary = task_success(QueryClass::CrossMeeting, "", None, &half).map_err(|e| e.to_string())?;
    ensure(identical && !no_bullets && !boundary, || {
        format!("worked examples: identical {identical}, no bullets {no_bullets}, hit rate 0.5 {boundary}")
    })?;
    Ok("1000 pairs match the LCS oracle; identical=success, no bullets=failure, hit rate 0.5=failure".into())
}

fn corpus_machinery() -> Check {
    let meeting = |id: &str, speakers: &[&str], duration: f64| {
        let turns = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| Turn::spoken(*s, i as f64 * 10.0, i as f64 * 10.0 + 5.0, "we should check the numbers"))
            .collect();
        Transcript::new(id, speakers.iter().map(|s| s.to_string()).collect(), turns, duration).expect("valid meeting")
    };

    let seg = segment(&meeting("m", &["a"], 1800.0), 1800.0);
    ensure(seg.len() == 1, || format!("{} segments for a 30-minute meeting", seg.len()))?;
    let offsets = injection_offsets(&seg[0], 300.0);
    ensure(offsets == vec![300.0, 600.0, 900.0, 1200.0, 1500.0, 1800.0], || format!("offsets {offsets:?}"))?;

    let splits = SplitAssignment {
        meetings: BTreeMap::from([("a".into(), Split::Train), ("b".into(), Split::Train), ("c".into(), Split::Test)]),
        speakers: BTreeMap::new(),
    };
    let (a, b, c) = (meeting("a", &["x"], 600.0), meeting("b", &["y"], 600.0), meeting("c", &["z"], 600.0));
    ensure(verify_splits(&[a.clone(), b.clone(), c.clone()], &splits).is_clean(), || "clean split flagged".into())?;
    let speaker_leak = verify_splits(&[a.clone(), b.clone(), meeting("c", &["x"], 600.0)], &splits);
    ensure(speaker_leak.speakers_spanning_splits.len() == 1, || "speaker leak missed".into())?;
    let mut b_leak = b.clone();
    let mut turn = Turn::spoken("y", 100.0, 100.0, "what did they decide last time?");
    turn.injected = true;
    turn.complexity = Some(ComplexityLabel::new(Cl::Low, Cd::CrossMeeting, Dk::General, Te::Low));
    turn.source_meeting = Some("c".into());
    b_leak.insert_turn(turn);
    let injection_leak = verify_splits(&[a.clone(), b_leak, c.clone()], &splits);
    ensure(injection_leak.cross_split_injections.len() == 1, || "cross-split injection missed".into())?;
    let mut seg_a = a.clone();
    seg_a.meeting_id = "r#0".into();
    seg_a.recording_id = Some("r".into());
    let mut seg_c = c.clone();
    seg_c.meeting_id = "r#1".into();
    seg_c.recording_id = Some("r".into());
    let mut s2 = splits.clone();
    s2.meetings.insert("r#0".into(), Split::Train);
    s2.meetings.insert("r#1".into(), Split::Test);
    let recording_leak = verify_splits(&[seg_a, seg_c], &s2);
    ensure(recording_leak.recordings_spanning_splits.len() == 1, || "recording leak missed".into())?;

    let synth = dualpilot::corpus::synth::generate_corpus(&Default::default(), &ClassMapping::default_mapping())
        .map_err(|e| e.to_string())?;
    ensure(verify_splits(&synth.transcripts, &synth.splits).is_clean(), || "synthetic corpus has leaks".into())?;

    // 100k injections through the scheduler, measured from the corpus
    let mapping = ClassMapping::default_mapping();
    let dist = ClassDistribution::enterprise_default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let base = meeting("big", &["a"], 1800.0);
    let unit = segment(&base, 1800.0).remove(0);
    let mut corpus = Vec::new();
    let mut injected = 0usize;
    while injected < 100_000 {
        let mut t = base.clone();
        t.meeting_id = format!("big{}", corpus.len());
        for p in schedule_injections(&unit, 300.0, &dist, &mapping, &mut rng).map_err(|e| e.to_string())? {
            if injected == 100_000 {
                break;
            }
            inject_query(&mut t, &p, "query", None);
            injected += 1;
        }
        corpus.push(t);
    }
    let measured = class_distribution(&corpus).map_err(|e| e.to_string())?;
    let js = js_oracle(&Band::ALL.map(|b| dist.get(b)), &Band::ALL.map(|b| measured.get(b)));
    ensure(js < 0.01, || format!("JS divergence {js}"))?;
    Ok(format!("6 points per 30 min; 3 leak kinds flagged, synthetic corpus clean; JS {js:.2e} at 100k injections"))
}

/// Jensen-Shannon divergence in bits.
fn js_oracle(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).log2()).sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

fn pareto_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for cloud in 0..1000 {
        // coarse values force ties and duplicates
        let pts: Vec<ParetoPoint> = (0..50)
            .map(|_| ParetoPoint {
                quality: rng.random_range(0..8) as f64 / 8.0,
                latency_s: rng.random_range(0..8) as f64,
                cost_k: rng.random_range(0..8) as f64 / 4.0,
            })
            .collect();
        let brute: Vec<usize> = (0..pts.len())
            .filter(|&i| {
                !pts.iter().any(|o| {
                    let p = &pts[i];
                    o.quality >= p.quality
                        && o.latency_s <= p.latency_s
                        && o.cost_k <= p.cost_k
                        && (o.quality > p.quality || o.latency_s < p.latency_s || o.cost_k < p.cost_k)
                })
            })
            .collect();
        let got = pareto_frontier(&pts);
        ensure(got == brute, || format!("cloud {cloud}: {got:?} != {brute:?}"))?;
    }
    Ok("1000 clouds of 50 points match the O(n^2) scan".into())
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("under root").to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

/// Runs every CLI command once, writing into `dir`.
fn cli_pass(dir: &Path, data: &Path) -> Result<(), String> {
    let d = |f: &str| data.join(f).to_string_lossy().into_owned();
    let o = |f: &str| dir.join(f).to_string_lossy().into_owned();
    let config = o("config.json");
    std::fs::write(&config, r#"{"seed": 5, "suite": "mixed", "suite_size": 40}"#).map_err(|e| e.to_string())?;
    let runs: Vec<Vec<String>> = vec![
        vec!["ingest".into(), "--synthetic".into(), "--meetings".into(), "12".into(), "--out".into(), o("synth")],
        vec!["ingest".into(), d("sample.TextGrid"), d("sample_meetings.jsonl"), "--out".into(), o("raw.jsonl")],
        vec!["inject".into(), "--corpus".into(), d("sample_meetings.jsonl"), "--splits".into(), d("sample_splits.json"), "--out".into(), o("injected.jsonl")],
        vec!["verify-splits".into(), "--corpus".into(), o("injected.jsonl"), "--splits".into(), d("sample_splits.json"), "--out".into(), o("leaks.json")],
        vec!["train-router".into(), "--corpus".into(), o("injected.jsonl"), "--epochs".into(), "2".into(), "--out".into(), o("corpus_router.bin")],
        vec!["train-router".into(), "--epochs".into(), "2".into(), "--out".into(), o("router.bin")],
        vec!["route".into(), "what was the budget again".into(), "--weights".into(), o("router.bin"), "--out".into(), o("route.json")],
        vec!["collect-replay".into(), "--weights".into(), o("router.bin"), "--n".into(), "120".into(), "--out".into(), o("replay.jsonl")],
        vec!["train-policy".into(), "--replay".into(), o("replay.jsonl"), "--weights".into(), o("router.bin"), "--epochs".into(), "2".into(), "--out".into(), o("policy")],
        vec!["simulate".into(), "--policy".into(), o("policy"), "--out".into(), o("sim")],
        vec!["bench".into(), "--suite".into(), "simple".into(), "--out".into(), o("bench.json")],
        vec!["ablate".into(), "--out".into(), o("ablate.json")],
        vec!["calibrate".into(), "--scores".into(), d("sample_scores.jsonl"), "--out".into(), o("map.json")],
        vec!["stats".into(), "--scores".into(), d("sample_scores.jsonl"), "--map".into(), o("map.json"), "--n-perm".into(), "500".into(), "--n-boot".into(), "500".into(), "--out".into(), o("stats.json")],
        vec!["sweep-weights".into(), "--out".into(), o("sweep.json")],
        vec!["pareto".into(), d("sample_pareto.json"), "--out".into(), o("pareto.json")],
        vec!["index".into(), d("sample_kb.jsonl"), "--out".into(), o("index.json")],
        vec!["search".into(), d("sample_kb.jsonl"), "budget of project cobalt 23".into(), "--out".into(), o("search.json")],
    ];
    for args in runs {
        let mut argv = vec!["dualpilot".to_string(), "--quiet".into(), "--config".into(), config.clone()];
        argv.extend(args.iter().cloned());
        let code = dualpilot::cli::run(&argv);
        if code != 0 {
            return Err(format!("`{}` exited {code}", args.join(" ")));
        }
    }
    Ok(())
}

fn cli_determinism() -> Check {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    cli_pass(a.path(), &data)?;
    cli_pass(b.path(), &data)?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    ensure(fa.keys().eq(fb.keys()), || "runs produced different file sets".into())?;
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("files differ between runs: {differing:?}"))?;
    Ok(format!("18 invocations, {} output files byte-identical across two runs", fa.len()))
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("gradient correctness", gradient_correctness),
        ("routing-head capacity", routing_capacity),
        ("CQL tabular oracle", cql_oracle),
        ("policy dominance", policy_dominance),
        ("gate semantics", gate_semantics),
        ("ablation structure", ablation_structure),
        ("latency model", latency_model),
        ("PAVA optimality", pava_optimality),
        ("calibration benefit", calibration_benefit),
        ("statistics oracles", statistics_oracles),
        ("ROUGE-L and task success", rouge_and_success),
        ("corpus machinery", corpus_machinery),
        ("Pareto frontier", pareto_brute_force),
        ("CLI determinism", cli_determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({took:.1?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {why} ({took:.1?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
