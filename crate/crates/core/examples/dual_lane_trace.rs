//! Runs single queries through the two lanes and prints their event
//! timelines: a confident fast answer, a confident slow one and an
//! unsure query that waits on the sentinel.

use dualpilot::orchestrator::{generate_suite, Engine, Mode, ScenarioKind, SuiteKind};
use dualpilot::policy::{rule_tool, EvidenceState, LabelPolicy, Policy, PolicyInput, ToolAction};
use dualpilot::router::RouterDecision;
use dualpilot::taxonomy::{route_label, ClassMapping};

/// Routes by label but reports low confidence, so the gate has to decide.
struct Hesitant;

impl Policy for Hesitant {
    fn route(&self, input: &PolicyInput<'_>) -> RouterDecision {
        RouterDecision { action: route_label(input.label), confidence: 0.5, logits: [0.0; 4] }
    }

    fn tool(&self, input: &PolicyInput<'_>, evidence: &EvidenceState) -> ToolAction {
        rule_tool(input.label, evidence)
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let suite = generate_suite(SuiteKind::Mixed, 60, 3, &ClassMapping::default_mapping())?;
    let engine = Engine::for_suite(&suite);
    let simple = suite.scenarios.iter().find(|s| s.kind == ScenarioKind::Simple).ok_or("no simple query")?;
    let complex = suite.scenarios.iter().find(|s| s.kind != ScenarioKind::Simple).ok_or("no complex query")?;

    let runs: [(&str, &dyn Policy, _); 3] =
        [("confident fast", &LabelPolicy, simple), ("confident slow", &LabelPolicy, complex), ("unsure", &Hesitant, simple)];
    for (name, policy, scenario) in runs {
        let out = engine.handle_query(scenario, policy, Mode::Parallel, 9);
        let t = &out.trace;
        println!("== {name}: {:?}", scenario.query);
        for e in &t.events {
            println!("{:>9.1} ms  {:<18} {}", e.t_ms, format!("{:?}", e.event), e.detail);
        }
        println!(
            "gate {:?} ({:?}), lane {:?}, {:.0} ms, {:.2}k tokens\n  -> {}\n",
            t.gate_outcome,
            t.gate_annotation,
            t.lane_used,
            t.latency_ms,
            t.tokens_k(),
            out.response
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
