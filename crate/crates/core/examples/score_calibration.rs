//! Fits an isotonic map from automated to human scores and reports
//! correlations with permutation p-values and BCa intervals.

use dualpilot::evalkit::{aggregate, apply_map, correlations, parse_scores, pava_fit, EQUAL_WEIGHTS};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let records = parse_scores(&std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_scores.jsonl"))?)?;
    let mut auto = Vec::new();
    let mut human = Vec::new();
    for r in records.iter().filter(|r| r.human_overall.is_some()) {
        auto.push(aggregate(&r.dims, &EQUAL_WEIGHTS)?);
        human.push(r.human_overall.unwrap_or_default());
    }
    let raw = correlations(&auto, &human, 2000, 2000, 1)?;
    println!("raw:        r={:.3} ci95=({:.3}, {:.3}) p={:.2e}", raw.pearson_r, raw.ci95.0, raw.ci95.1, raw.p_two_sided);

    let map = pava_fit(&auto, &human)?;
    let calibrated: Vec<f64> = auto.iter().map(|&a| apply_map(&map, a)).collect();
    let cal = correlations(&calibrated, &human, 2000, 2000, 1)?;
    println!("calibrated: r={:.3} rho={:.3} tau={:.3}", cal.pearson_r, cal.spearman_rho, cal.kendall_tau);
    println!("map has {} breakpoints; 3.0 -> {:.2}", map.breakpoints.len(), apply_map(&map, 3.0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
