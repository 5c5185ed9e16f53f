//! Parses a TextGrid meeting, cuts it into units and injects labeled
//! queries on the 300 s grid.

use dualpilot::corpus::synth::{random_fact, render_query};
use dualpilot::corpus::{inject_query, parse_textgrid, schedule_injections, segment};
use dualpilot::taxonomy::{ClassDistribution, ClassMapping};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bytes = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample.TextGrid"))?;
    let grid = parse_textgrid(&bytes, "sample")?;
    println!("{} turns from {} speakers over {:.0}s", grid.turns.len(), grid.speakers.len(), grid.duration_s);

    let meeting = dualpilot::corpus::parse_jsonl_corpus(&std::fs::read(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/sample_meetings.jsonl"
    ))?)?
    .remove(0);
    let mapping = ClassMapping::default_mapping();
    let dist = ClassDistribution::enterprise_default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut injected = meeting.clone();
    for unit in segment(&meeting, 1800.0) {
        for point in schedule_injections(&unit, 300.0, &dist, &mapping, &mut rng)? {
            let fact = random_fact(&mut rng);
            let text = render_query(&point.label, &fact, &mut rng);
            let turn = inject_query(&mut injected, &point, &text, Some(fact.sentence));
            println!("{:>6.0}s class {} {:?}: {}", turn.start_s, point.sampled_class, point.label.band(), turn.text);
        }
    }
    injected.validate()?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
