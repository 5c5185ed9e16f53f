//! Trains the supervised routing head on hashed n-gram features and
//! routes a few queries.

use dualpilot::orchestrator::{generate_suite, Engine, SuiteKind};
use dualpilot::router::{forward, train_supervised, FeatureExtractor, FeatureVector, HashedNgrams, TrainConfig};
use dualpilot::taxonomy::{route_label, ClassMapping, RoutingAction};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let suite = generate_suite(SuiteKind::Mixed, 300, 11, &ClassMapping::default_mapping())?;
    let engine = Engine::for_suite(&suite);
    let data: Vec<(FeatureVector, RoutingAction)> =
        suite.scenarios.iter().map(|s| (engine.features(s), route_label(&s.label))).collect();
    let head = train_supervised(
        &data,
        &TrainConfig {
            epochs: 5,
            seed: 1,
            ..TrainConfig::default()
        },
    )?;
    println!(
        "{} parameters, train accuracy {:.3}, held-out {:?}",
        head.weights.param_count(),
        head.train_accuracy,
        head.heldout_accuracy
    );

    let extractor = HashedNgrams::default();
    for query in [
        "sorry, what was the last number she said?",
        "compare the budget of project iris 70 with what we agreed last week",
        "draft the action items for project cobalt 23 and notify the owners",
    ] {
        let d = forward(&head.weights, &extractor.extract(query, ""))?;
        println!("{:<12} {:.2}  {query}", format!("{:?}", d.action), d.confidence);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
