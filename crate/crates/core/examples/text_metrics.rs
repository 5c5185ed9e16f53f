//! ROUGE-L between answers and references, and task-execution metrics
//! over a handful of logged runs.

use dualpilot::evalkit::{rouge_l_text, te_metrics, TeRecord};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let reference = "the budget of project cobalt 23 is forty thousand";
    for answer in [
        "The budget of project cobalt 23 is forty thousand.",
        "Project cobalt has a budget of about forty thousand.",
        "I could not find that.",
    ] {
        let r = rouge_l_text(answer, reference)?;
        println!("P {:.2} R {:.2} F {:.2}  {answer}", r.precision, r.recall, r.f);
    }

    let runs = vec![
        TeRecord { success: true, tool_calls: vec!["kb".into(), "cross".into()], latency_s: 17.2 },
        TeRecord { success: false, tool_calls: vec!["kb".into()], latency_s: 21.0 },
        TeRecord { success: true, tool_calls: vec![], latency_s: 0.9 },
    ];
    let m = te_metrics(&runs, &[true, true, false])?;
    println!("TE success@1 {:.2}, chain length {:.1}, exec time {:.1}s over {}", m.te_success_at_1, m.mean_chain_len, m.mean_exec_time_s, m.n);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
