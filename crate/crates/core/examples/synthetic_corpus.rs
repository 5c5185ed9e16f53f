//! Generates a small labeled corpus, checks the split for leakage and
//! compares the injected band mix with the target distribution.

use dualpilot::corpus::synth::{generate_corpus, SynthConfig};
use dualpilot::corpus::{class_distribution, verify_splits};
use dualpilot::taxonomy::{route_label, Band, ClassMapping, ComplexityLabel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mapping = ClassMapping::default_mapping();
    let cfg = SynthConfig {
        meetings: 24,
        injected_turns: 120,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg, &mapping)?;
    let leaks = verify_splits(&corpus.transcripts, &corpus.splits);
    println!("{} meetings, leakage clean: {}", corpus.transcripts.len(), leaks.is_clean());

    let observed = class_distribution(&corpus.transcripts)?;
    for band in [Band::Low, Band::Medium, Band::High, Band::Cross] {
        println!("{band:?}: target {:.3} observed {:.3}", cfg.dist.get(band), observed.get(band));
    }

    let first = corpus.transcripts.iter().flat_map(|t| t.injected_turns()).next();
    if let Some(turn) = first {
        let label = turn.complexity.expect("injected turns carry a label");
        println!("sample query at {:.0}s: {:?} -> {:?}", turn.start_s, turn.text, route_label(&label));
    }
    println!("{} cells in the taxonomy", ComplexityLabel::all_cells().len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
