//! Logs replay from an exploring behavior policy, refines both heads with
//! conservative Q-learning and compares the result with fixed baselines.

use dualpilot::orchestrator::{generate_suite, Engine, Mode, SuiteKind};
use dualpilot::policy::{
    collect_replay, evaluate_policy, init_tool_head, train_cql, Confident, ConstantPolicy, CqlConfig, EpsilonGreedy,
    LearnedPolicy, RewardSpec, RouterWithRules, ToolAction,
};
use dualpilot::router::{train_supervised, FeatureVector, TrainConfig, DEFAULT_DIM};
use dualpilot::taxonomy::{route_label, ClassMapping, RoutingAction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mapping = ClassMapping::default_mapping();
    let train = generate_suite(SuiteKind::Mixed, 600, 11, &mapping)?;
    let eval = generate_suite(SuiteKind::Mixed, 300, 12, &mapping)?;
    let engine = Engine::for_suite(&train);

    let data: Vec<(FeatureVector, RoutingAction)> =
        train.scenarios.iter().map(|s| (engine.features(s), route_label(&s.label))).collect();
    let router = train_supervised(&data, &TrainConfig { epochs: 8, seed: 1, ..TrainConfig::default() })?.weights;

    let behavior = EpsilonGreedy { inner: RouterWithRules { router: router.clone() }, epsilon: 0.3 };
    let replay = collect_replay(&train, &behavior, &engine, 3000, 5)?;
    let tool = init_tool_head(DEFAULT_DIM, 64, &mut ChaCha8Rng::seed_from_u64(3));
    let spec = RewardSpec::default();
    let report = train_cql(&replay, &router, &tool, &CqlConfig { epochs: 10, seed: 2, ..CqlConfig::default() }, &spec)?;
    println!("router loss per epoch {:?}", report.router_losses);
    println!("tool loss per epoch   {:?}", report.tool_losses);

    let eval_engine = Engine::for_suite(&eval);
    let learned = Confident(LearnedPolicy { router: report.router, tool: report.tool });
    let v = evaluate_policy(&eval, &learned, &eval_engine, Mode::Parallel, 7, &spec);
    println!("learned   reward {:.4} success {:.3} latency {:.2}s", v.mean_reward, v.success_rate, v.mean_latency_s);
    for route in [RoutingAction::Fast, RoutingAction::SlowRag] {
        let c = ConstantPolicy { route, tool: ToolAction::None };
        let v = evaluate_policy(&eval, &c, &eval_engine, Mode::Parallel, 7, &spec);
        println!("always {route:?} reward {:.4} success {:.3}", v.mean_reward, v.success_rate);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
