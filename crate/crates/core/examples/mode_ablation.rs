//! Compares routing-only, tools-only, serial and parallel execution on a
//! mixed suite.

use dualpilot::orchestrator::{generate_suite, run_ablation, Engine, Mode, SuiteKind};
use dualpilot::policy::LabelPolicy;
use dualpilot::taxonomy::ClassMapping;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let suite = generate_suite(SuiteKind::Mixed, 150, 2, &ClassMapping::default_mapping())?;
    let engine = Engine::for_suite(&suite);
    let report = run_ablation(&engine, &suite, &LabelPolicy, &Mode::ALL, 2)?;
    println!("{:<14}{:>9}{:>9}{:>9}{:>10}", "mode", "quality", "P50 s", "P90 s", "tokens k");
    for m in &report.modes {
        println!("{:<14}{:>9.3}{:>9.2}{:>9.2}{:>10.2}", m.mode.to_string(), m.quality_proxy, m.p50_s, m.p90_s, m.mean_tokens_k);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
