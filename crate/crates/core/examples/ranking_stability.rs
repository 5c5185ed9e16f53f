//! Checks how stable a model ranking is when the five rubric dimensions
//! are reweighted, then finds the quality/latency/cost frontier.

use dualpilot::evalkit::{aggregate, pareto_frontier, weight_sensitivity, DimensionScores, ParetoPoint, EQUAL_WEIGHTS};
use serde::Deserialize;

#[derive(Deserialize)]
struct ModelRow {
    model: String,
    dims: [f64; 5],
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let rows: Vec<ModelRow> =
        serde_json::from_str(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/model_dimensions.json"))?)?;
    let mut ranked: Vec<(f64, &str)> = rows
        .iter()
        .map(|r| Ok((aggregate(&DimensionScores::from_array(r.dims), &EQUAL_WEIGHTS)?, r.model.as_str())))
        .collect::<Result<_, dualpilot::evalkit::EvalError>>()?;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (score, model) in &ranked {
        println!("{score:.2}  {model}");
    }
    let dims: Vec<[f64; 5]> = rows.iter().map(|r| r.dims).collect();
    let sweep = weight_sensitivity(&dims, 2.0, 10)?;
    println!("min Kendall tau {:.3} over {} weightings", sweep.min_kendall_tau, sweep.vectors_evaluated);

    let points = [
        ParetoPoint { quality: 0.62, latency_s: 0.9, cost_k: 0.4 },
        ParetoPoint { quality: 0.80, latency_s: 18.0, cost_k: 1.8 },
        ParetoPoint { quality: 0.78, latency_s: 19.0, cost_k: 2.0 },
        ParetoPoint { quality: 0.74, latency_s: 12.0, cost_k: 1.7 },
    ];
    println!("frontier: {:?}", pareto_frontier(&points));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
