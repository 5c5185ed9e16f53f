//! Latency percentiles per band for the simple and complex suites, with
//! the simple-query budget check.

use dualpilot::orchestrator::{generate_suite, latency_stats, run_suite, Engine, Mode, SuiteKind};
use dualpilot::policy::LabelPolicy;
use dualpilot::taxonomy::ClassMapping;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mapping = ClassMapping::default_mapping();
    for kind in [SuiteKind::Simple, SuiteKind::Complex] {
        let suite = generate_suite(kind, 150, 1, &mapping)?;
        let engine = Engine::for_suite(&suite);
        let traces: Vec<_> =
            run_suite(&engine, &suite, &LabelPolicy, Mode::Parallel, 1).into_iter().map(|o| o.trace).collect();
        let stats = latency_stats(&traces, &[50.0, 90.0, 99.0])?;
        println!("{kind} suite, talker {:.2}k / planner {:.2}k tokens per query", stats.talker_tokens_k_mean, stats.planner_tokens_k_mean);
        for (band, b) in &stats.per_band {
            let ps: Vec<String> = b.percentiles.iter().map(|p| format!("P{}={:.2}s", p.p, p.value_s)).collect();
            println!("  {band:?} (n={}): {}", b.n, ps.join(" "));
        }
        if let Some(slo) = &stats.simple_slo {
            println!("  simple budget: P50 {:.2}s ok={} P90 {:.2}s ok={}", slo.p50_s, slo.p50_ok, slo.p90_s, slo.p90_ok);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
