//! BM25, dense and hybrid search over the sample knowledge base, plus the
//! extractive meeting summarizer.

use dualpilot::text::tokenize;
use dualpilot::tools::{bm25_search, dense_search, hybrid_search, load_documents, meet_sum, RetrievalIndex, SummarizerConfig};
use dualpilot::router::HashedNgrams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let docs = load_documents(concat!(env!("CARGO_MANIFEST_DIR"), "/data/sample_kb.jsonl").as_ref())?;
    let index = RetrievalIndex::build(docs.clone(), HashedNgrams::default());
    let query = "what is the budget of project cobalt 23";
    println!("{} documents, average length {:.1}", index.len(), index.avg_len());
    for (name, hits) in [
        ("bm25", bm25_search(&index, &tokenize(query), 3)?),
        ("dense", dense_search(&index, query, 3)?),
        ("hybrid", hybrid_search(&index, query, 3, 0.5)?),
    ] {
        let ids: Vec<String> = hits.iter().map(|h| format!("{}={:.3}", h.source_id, h.score)).collect();
        println!("{name:<7}{}", ids.join("  "));
    }

    let texts: Vec<String> = docs.iter().map(|d| d.text.clone()).collect();
    let summary = meet_sum(&texts, &SummarizerConfig { max_sentences: 3, ..SummarizerConfig::default() })?;
    println!("summary covers {:.0}% of term mass:", summary.coverage * 100.0);
    for s in &summary.sentences {
        println!("  {s}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
