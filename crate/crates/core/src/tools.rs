//! Planner tools: BM25 and hybrid retrieval, cross-session entity
//! aggregation, extractive summarization with a marginal-gain stop, and an
//! offline web search over fixtures.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Transcript;
use crate::router::{FeatureExtractor, FeatureVector, HashedNgrams};
use crate::text::{is_stopword, tokenize, truncate_words};

pub const SNIPPET_WORDS: usize = 60;
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("no input sentences")]
    EmptyInput,
    #[error("fixture file missing: {0}")]
    FixtureMissing(PathBuf),
    #[error("cross-session aggregation needs at least 2 meetings, got {0}")]
    TooFewMeetings(usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub source_id: String,
    pub text: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
}

/// One retrievable unit. JSONL form: `{doc_id, text, timestamp_s?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_s: Option<f64>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            timestamp_s: None,
        }
    }
}

pub fn parse_documents(bytes: &[u8]) -> Result<Vec<Document>, ToolError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ToolError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ToolError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>, ToolError> {
    let bytes = fs::read(path).map_err(|source| ToolError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_documents(&bytes)
}

pub fn emit_documents(docs: &[Document]) -> String {
    docs.iter()
        .map(|d| serde_json::to_string(d).expect("document serializes") + "\n")
        .collect()
}

/// Chunks a meeting into documents of `turns_per_doc` spoken turns, ids
/// `Meeting-<meeting>#<n>`, timestamped `session_offset_s + start`.
pub fn meeting_documents(t: &Transcript, turns_per_doc: usize, session_offset_s: f64) -> Vec<Document> {
    let spoken: Vec<_> = t.turns.iter().filter(|x| !x.injected).collect();
    spoken
        .chunks(turns_per_doc.max(1))
        .enumerate()
        .map(|(n, chunk)| Document {
            doc_id: format!("Meeting-{}#{n}", t.meeting_id),
            text: chunk.iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" "),
            timestamp_s: Some(session_offset_s + chunk[0].start_s),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct IndexedDoc {
    doc: Document,
    len: usize,
    tf: HashMap<String, usize>,
}

/// Build-once lexical and dense index. Documents are kept in doc-id order,
/// which is also the tie-break order of every ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    docs: Vec<IndexedDoc>,
    df: HashMap<String, usize>,
    avg_len: f64,
    embeddings: Vec<FeatureVector>,
    embedder: HashedNgrams,
}

impl RetrievalIndex {
    pub fn build(mut documents: Vec<Document>, embedder: HashedNgrams) -> Self {
        documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut df: HashMap<String, usize> = HashMap::new();
        let docs: Vec<IndexedDoc> = documents
            .into_iter()
            .map(|doc| {
                let toks = tokenize(&doc.text);
                let mut tf = HashMap::new();
                for t in &toks {
                    *tf.entry(t.clone()).or_insert(0) += 1;
                }
                for t in tf.keys() {
                    *df.entry(t.clone()).or_insert(0) += 1;
                }
                IndexedDoc {
                    len: toks.len(),
                    doc,
                    tf,
                }
            })
            .collect();
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64
        };
        let embeddings = docs.iter().map(|d| embedder.extract(&d.doc.text, "")).collect();
        Self {
            docs,
            df,
            avg_len,
            embeddings,
            embedder,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.doc.doc_id.as_str())
    }

    pub fn embedding(&self, i: usize) -> &FeatureVector {
        &self.embeddings[i]
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// BM25 score of every document, in index order.
    pub fn bm25_scores(&self, query_tokens: &[String]) -> Vec<f64> {
        let terms: Vec<&String> = {
            let mut seen = HashSet::new();
            query_tokens.iter().filter(|t| seen.insert(t.as_str())).collect()
        };
        let idfs: Vec<f64> = terms.iter().map(|t| self.idf(t)).collect();
        self.docs
            .iter()
            .map(|d| {
                let norm = if self.avg_len > 0.0 {
                    1.0 - BM25_B + BM25_B * d.len as f64 / self.avg_len
                } else {
                    1.0
                };
                terms
                    .iter()
                    .zip(&idfs)
                    .map(|(t, idf)| match d.tf.get(t.as_str()) {
                        Some(&tf) => {
                            let tf = tf as f64;
                            idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
                        }
                        None => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    /// Largest fraction of the distinct `terms` that one document contains.
    pub fn best_coverage(&self, terms: &[String]) -> f64 {
        let distinct: HashSet<&str> = terms.iter().map(String::as_str).collect();
        if distinct.is_empty() {
            return 0.0;
        }
        let best = self
            .docs
            .iter()
            .map(|d| distinct.iter().filter(|t| d.tf.contains_key(**t)).count())
            .max()
            .unwrap_or(0);
        best as f64 / distinct.len() as f64
    }

    /// Cosine similarity of the query embedding with every document.
    pub fn dense_scores(&self, query: &str) -> Vec<f64> {
        let q = self.embedder.extract(query, "");
        self.embeddings.iter().map(|e| q.cosine(e)).collect()
    }

    fn top_k(&self, scores: &[f64], k: usize) -> Vec<Snippet> {
        rank(scores)
            .into_iter()
            .take(k)
            .map(|i| self.snippet(i, scores[i]))
            .collect()
    }

    fn snippet(&self, i: usize, score: f64) -> Snippet {
        let d = &self.docs[i].doc;
        Snippet {
            source_id: d.doc_id.clone(),
            text: truncate_words(&d.text, SNIPPET_WORDS),
            score,
            timestamp_s: d.timestamp_s,
        }
    }
}

/// Indices ordered by score descending, index ascending on ties.
fn rank(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

pub fn bm25_search(index: &RetrievalIndex, query_tokens: &[String], k: usize) -> Result<Vec<Snippet>, ToolError> {
    assert!(k >= 1, "k must be at least 1");
    if index.is_empty() {
        return Err(ToolError::EmptyIndex);
    }
    Ok(index.top_k(&index.bm25_scores(query_tokens), k))
}

/// Pure cosine ranking over the hashed embeddings.
pub fn dense_search(index: &RetrievalIndex, query: &str, k: usize) -> Result<Vec<Snippet>, ToolError> {
    assert!(k >= 1, "k must be at least 1");
    if index.is_empty() {
        return Err(ToolError::EmptyIndex);
    }
    Ok(index.top_k(&index.dense_scores(query), k))
}

fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; scores.len()]
    }
}

/// `mix · minmax(bm25) + (1 − mix) · cosine`.
pub fn hybrid_scores(index: &RetrievalIndex, query: &str, mix: f64) -> Vec<f64> {
    let lexical = min_max(&index.bm25_scores(&tokenize(query)));
    let dense = index.dense_scores(query);
    lexical
        .iter()
        .zip(&dense)
        .map(|(l, d)| mix * l + (1.0 - mix) * d)
        .collect()
}

pub fn hybrid_search(index: &RetrievalIndex, query: &str, k: usize, mix: f64) -> Result<Vec<Snippet>, ToolError> {
    assert!(k >= 1, "k must be at least 1");
    assert!((0.0..=1.0).contains(&mix), "mix must lie in [0, 1]");
    if index.is_empty() {
        return Err(ToolError::EmptyIndex);
    }
    Ok(index.top_k(&hybrid_scores(index, query, mix), k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSessionResult {
    pub snippets: Vec<Snippet>,
    /// Fraction of queried meetings that contributed at least one snippet.
    pub cross_cache_hit_rate: f64,
}

/// Ranks segments of several meetings by TF-IDF similarity to an entity,
/// later timestamps first on ties, and keeps at most `window` snippets.
pub fn cross_session_aggregate(
    meetings: &BTreeMap<String, RetrievalIndex>,
    entity_tokens: &[String],
    window: usize,
) -> Result<CrossSessionResult, ToolError> {
    if meetings.len() < 2 {
        return Err(ToolError::TooFewMeetings(meetings.len()));
    }
    let entity: HashSet<&str> = entity_tokens.iter().map(String::as_str).collect();
    let n_docs: usize = meetings.values().map(RetrievalIndex::len).sum();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for idx in meetings.values() {
        for t in &entity {
            *df.entry(t).or_insert(0) += idx.df(t);
        }
    }
    let idf = |t: &str| ((1.0 + n_docs as f64) / (1.0 + df[t] as f64)).ln() + 1.0;
    let mut hits: Vec<(f64, Option<f64>, &str, Snippet)> = Vec::new();
    let mut contributing = HashSet::new();
    for (meeting, idx) in meetings {
        for (i, d) in idx.docs.iter().enumerate() {
            if d.len == 0 {
                continue;
            }
            let score: f64 = entity
                .iter()
                .filter_map(|t| d.tf.get(*t).map(|&tf| tf as f64 / d.len as f64 * idf(t)))
                .sum();
            if score > 0.0 {
                contributing.insert(meeting.as_str());
                hits.push((score, d.doc.timestamp_s, meeting.as_str(), idx.snippet(i, score)));
            }
        }
    }
    hits.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| cmp_time_desc(a.1, b.1))
            .then_with(|| a.3.source_id.cmp(&b.3.source_id))
    });
    Ok(CrossSessionResult {
        cross_cache_hit_rate: contributing.len() as f64 / meetings.len() as f64,
        snippets: hits.into_iter().take(window).map(|h| h.3).collect(),
    })
}

fn cmp_time_desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummarizerConfig {
    pub epsilon: f64,
    pub max_sentences: usize,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_sentences: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Selected sentences in original order.
    pub sentences: Vec<String>,
    /// Indices into the split sentence list, in original order.
    pub indices: Vec<usize>,
    /// Marginal gain of each pick, in pick order.
    pub gains: Vec<f64>,
    /// Fraction of TF-IDF mass covered, in `[0, 1]`.
    pub coverage: f64,
}

/// Splits on sentence-final punctuation; text without any is one sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        cur.push(c);
        if matches!(c, '.' | '?' | '!') {
            let s = cur.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            cur.clear();
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

/// Per-term TF-IDF weights of a sentence set and each sentence's term set.
pub fn term_mass(sentences: &[String]) -> (HashMap<String, f64>, Vec<HashSet<String>>) {
    let sets: Vec<HashSet<String>> = sentences
        .iter()
        .map(|s| tokenize(s).into_iter().filter(|t| !is_stopword(t)).collect())
        .collect();
    let mut tf: HashMap<String, f64> = HashMap::new();
    let mut sf: HashMap<String, f64> = HashMap::new();
    for (s, set) in sentences.iter().zip(&sets) {
        for t in tokenize(s).into_iter().filter(|t| !is_stopword(t)) {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        for t in set {
            *sf.entry(t.clone()).or_insert(0.0) += 1.0;
        }
    }
    let n = sentences.len() as f64;
    let total: f64 = tf
        .iter()
        .map(|(t, c)| c * (((1.0 + n) / (1.0 + sf[t])).ln() + 1.0))
        .sum();
    let mass = tf
        .into_iter()
        .map(|(t, c)| {
            let w = c * (((1.0 + n) / (1.0 + sf[&t])).ln() + 1.0);
            (t, if total > 0.0 { w / total } else { 0.0 })
        })
        .collect();
    (mass, sets)
}

/// Greedy extractive summary. The first pick is always taken; later picks
/// stop once the best marginal gain drops below `epsilon`.
pub fn meet_sum(turn_texts: &[String], cfg: &SummarizerConfig) -> Result<Summary, ToolError> {
    assert!(cfg.epsilon > 0.0, "epsilon must be positive");
    let sentences: Vec<String> = turn_texts.iter().flat_map(|t| split_sentences(t)).collect();
    if sentences.is_empty() {
        return Err(ToolError::EmptyInput);
    }
    let (mass, sets) = term_mass(&sentences);
    let mut covered: HashSet<&str> = HashSet::new();
    let mut picked: Vec<usize> = Vec::new();
    let mut gains = Vec::new();
    while picked.len() < cfg.max_sentences.max(1) {
        let best = (0..sentences.len())
            .filter(|i| !picked.contains(i))
            .map(|i| {
                let g: f64 = sets[i]
                    .iter()
                    .filter(|t| !covered.contains(t.as_str()))
                    .map(|t| mass[t])
                    .sum();
                (i, g)
            })
            .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                Some((_, bg)) if bg >= g - 1e-12 => acc,
                _ => Some((i, g)),
            });
        let Some((i, g)) = best else { break };
        if !picked.is_empty() && g < cfg.epsilon {
            break;
        }
        picked.push(i);
        gains.push(g);
        covered.extend(sets[i].iter().map(String::as_str));
    }
    let coverage = covered.iter().map(|t| mass[*t]).sum();
    let mut indices = picked;
    indices.sort_unstable();
    Ok(Summary {
        sentences: indices.iter().map(|&i| sentences[i].clone()).collect(),
        indices,
        gains,
        coverage,
    })
}

/// Local stand-in for web search; never touches the network.
#[derive(Debug, Clone, PartialEq)]
pub struct WebFixtures {
    docs: Vec<Document>,
}

impl WebFixtures {
    pub fn new(mut docs: Vec<Document>) -> Self {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Self { docs }
    }

    pub fn load(path: &Path) -> Result<Self, ToolError> {
        if !path.exists() {
            return Err(ToolError::FixtureMissing(path.to_path_buf()));
        }
        Ok(Self::new(load_documents(path)?))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Fixtures ranked by the number of distinct non-stopword query terms they
/// contain; fixtures with no match are dropped.
pub fn web_search_mock(fixtures: &WebFixtures, query: &str, k: usize) -> Vec<Snippet> {
    let terms: HashSet<String> = tokenize(query).into_iter().filter(|t| !is_stopword(t)).collect();
    let scores: Vec<f64> = fixtures
        .docs
        .iter()
        .map(|d| {
            let toks: HashSet<String> = tokenize(&d.text).into_iter().collect();
            terms.iter().filter(|t| toks.contains(*t)).count() as f64
        })
        .collect();
    rank(&scores)
        .into_iter()
        .filter(|&i| scores[i] > 0.0)
        .take(k)
        .map(|i| {
            let d = &fixtures.docs[i];
            Snippet {
                source_id: d.doc_id.clone(),
                text: truncate_words(&d.text, SNIPPET_WORDS),
                score: scores[i],
                timestamp_s: d.timestamp_s,
            }
        })
        .collect()
}
