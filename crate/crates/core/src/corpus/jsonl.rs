//! One-JSON-object-per-line turn format.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Language, Transcript, Turn};

#[derive(Debug, Serialize, Deserialize)]
struct TurnLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meeting_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recording_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    language: Option<Language>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
    #[serde(flatten)]
    turn: Turn,
}

struct Builder {
    meeting_id: String,
    recording_id: Option<String>,
    language: Option<Language>,
    domain_tag: Option<String>,
    duration_s: Option<f64>,
    turns: Vec<Turn>,
    seen: HashSet<(String, u64)>,
}

impl Builder {
    fn new(meeting_id: String) -> Self {
        Self {
            meeting_id,
            recording_id: None,
            language: None,
            domain_tag: None,
            duration_s: None,
            turns: Vec::new(),
            seen: HashSet::new(),
        }
    }

    fn push(&mut self, line_no: usize, line: TurnLine) -> Result<(), CorpusError> {
        let turn = line.turn;
        if turn.injected && turn.complexity.is_none() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "injected turn without complexity label".into(),
            });
        }
        if !(turn.start_s.is_finite() && turn.end_s.is_finite()) || turn.end_s < turn.start_s {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("bad turn bounds [{}, {}]", turn.start_s, turn.end_s),
            });
        }
        if !self.seen.insert((turn.speaker.clone(), turn.start_s.to_bits())) {
            return Err(CorpusError::DuplicateTurn {
                line: line_no,
                speaker: turn.speaker,
                start_s: turn.start_s,
            });
        }
        self.recording_id = self.recording_id.take().or(line.recording_id);
        self.language = self.language.or(line.language);
        self.domain_tag = self.domain_tag.take().or(line.domain_tag);
        self.duration_s = self.duration_s.or(line.duration_s);
        self.turns.push(turn);
        Ok(())
    }

    fn finish(self) -> Result<Transcript, CorpusError> {
        let speakers: BTreeSet<String> = self.turns.iter().map(|t| t.speaker.clone()).collect();
        let last_end = self.turns.iter().map(|t| t.end_s).fold(0.0, f64::max);
        let mut t = Transcript::new(
            self.meeting_id,
            speakers,
            self.turns,
            self.duration_s.unwrap_or(last_end).max(last_end),
        )?;
        t.recording_id = self.recording_id;
        t.language = self.language.unwrap_or_default();
        t.domain_tag = self.domain_tag.unwrap_or_default();
        Ok(t)
    }
}

fn lines(bytes: &[u8]) -> Result<impl Iterator<Item = (usize, &str)>, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Parse {
        line: 1,
        message: format!("not UTF-8: {e}"),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty()))
}

fn parse_line(line_no: usize, line: &str) -> Result<TurnLine, CorpusError> {
    serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Parses the turns of a single meeting. Unknown fields are ignored.
pub fn parse_jsonl_turns(bytes: &[u8], meeting_id: &str) -> Result<Transcript, CorpusError> {
    let mut b = Builder::new(meeting_id.to_string());
    for (n, line) in lines(bytes)? {
        b.push(n, parse_line(n, line)?)?;
    }
    b.finish()
}

/// Parses a multi-meeting file grouped by each line's `meeting_id`.
/// Meetings come back in first-appearance order.
pub fn parse_jsonl_corpus(bytes: &[u8]) -> Result<Vec<Transcript>, CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut builders: BTreeMap<String, Builder> = BTreeMap::new();
    for (n, line) in lines(bytes)? {
        let parsed = parse_line(n, line)?;
        let id = parsed.meeting_id.clone().ok_or_else(|| CorpusError::Parse {
            line: n,
            message: "missing meeting_id".into(),
        })?;
        let b = builders.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Builder::new(id)
        });
        b.push(n, parsed)?;
    }
    order
        .into_iter()
        .map(|id| builders.remove(&id).expect("builder exists").finish())
        .collect()
}

/// One line per turn, carrying the meeting-level fields on every line.
pub fn emit_jsonl(t: &Transcript) -> String {
    let mut out = String::new();
    for turn in &t.turns {
        let line = TurnLine {
            meeting_id: Some(t.meeting_id.clone()),
            recording_id: t.recording_id.clone(),
            language: Some(t.language),
            domain_tag: Some(t.domain_tag.clone()),
            duration_s: Some(t.duration_s),
            turn: turn.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("turn serializes"));
        out.push('\n');
    }
    out
}
