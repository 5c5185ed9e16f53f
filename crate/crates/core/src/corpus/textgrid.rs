//! Interval-tier subset of the Praat TextGrid long text format.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{CorpusError, Transcript, Turn};

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Self { lines, pos: 0 }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map(|(n, _)| *n).unwrap_or(0)
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), CorpusError> {
        let item = self.lines.get(self.pos).copied().ok_or_else(|| CorpusError::Parse {
            line: self.last_line() + 1,
            message: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).map(|(_, l)| *l)
    }

    /// `key = value`, returning the raw value.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), CorpusError> {
        let (line, text) = self.next(key)?;
        let rest = text.strip_prefix(key).map(str::trim_start);
        match rest.and_then(|r| r.strip_prefix('=')) {
            Some(v) => Ok((line, v.trim())),
            None => Err(CorpusError::Parse {
                line,
                message: format!("expected `{key} = ...`, found `{text}`"),
            }),
        }
    }

    fn number(&mut self, key: &str) -> Result<(usize, f64), CorpusError> {
        let (line, v) = self.field(key)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(|x| (line, x))
            .ok_or_else(|| CorpusError::Parse {
                line,
                message: format!("`{key}` is not a finite number: `{v}`"),
            })
    }

    fn count(&mut self, key: &str) -> Result<usize, CorpusError> {
        let (line, v) = self.field(key)?;
        v.parse::<usize>().map_err(|_| CorpusError::Parse {
            line,
            message: format!("`{key}` is not a count: `{v}`"),
        })
    }

    /// Quoted string value; may continue over several lines. Doubled quotes
    /// are literal quotes; continuation lines are joined with one space.
    fn string(&mut self, key: &str) -> Result<String, CorpusError> {
        let (line, v) = self.field(key)?;
        let Some(mut rest) = v.strip_prefix('"') else {
            return Err(CorpusError::Parse {
                line,
                message: format!("`{key}` must be a quoted string"),
            });
        };
        let mut out = String::new();
        loop {
            let mut chars = rest.chars().peekable();
            while let Some(c) = chars.next() {
                if c == '"' {
                    if chars.peek() == Some(&'"') {
                        chars.next();
                        out.push('"');
                    } else {
                        return Ok(out);
                    }
                } else {
                    out.push(c);
                }
            }
            let (_, cont) = self.next("closing quote").map_err(|_| CorpusError::Parse {
                line,
                message: format!("unterminated string for `{key}`"),
            })?;
            out.push(' ');
            rest = cont;
        }
    }

    fn expect(&mut self, literal: &str) -> Result<(), CorpusError> {
        let (line, text) = self.next(literal)?;
        if text == literal {
            Ok(())
        } else {
            Err(CorpusError::Parse {
                line,
                message: format!("expected `{literal}`, found `{text}`"),
            })
        }
    }

    fn expect_prefix(&mut self, prefix: &str) -> Result<(), CorpusError> {
        let (line, text) = self.next(prefix)?;
        if text.starts_with(prefix) {
            Ok(())
        } else {
            Err(CorpusError::Parse {
                line,
                message: format!("expected `{prefix}...`, found `{text}`"),
            })
        }
    }
}

const BOUND_SLACK: f64 = 1e-9;

/// Parses an interval-tier TextGrid. Each non-empty interval becomes a
/// turn whose speaker is the tier name.
pub fn parse_textgrid(bytes: &[u8], meeting_id: &str) -> Result<Transcript, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Parse {
        line: 1,
        message: format!("not UTF-8: {e}"),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = Lines::new(text);

    let file_type = lines.string("File type")?;
    if file_type != "ooTextFile" {
        return Err(CorpusError::Parse {
            line: 1,
            message: format!("unsupported file type {file_type:?}"),
        });
    }
    let object_class = lines.string("Object class")?;
    if object_class != "TextGrid" {
        return Err(CorpusError::Parse {
            line: 2,
            message: format!("unsupported object class {object_class:?}"),
        });
    }
    lines.number("xmin")?;
    let (_, duration_s) = lines.number("xmax")?;
    lines.expect("tiers? <exists>")?;
    let n_tiers = lines.count("size")?;
    lines.expect("item []:")?;

    let mut speakers = BTreeSet::new();
    let mut turns = Vec::new();
    for _ in 0..n_tiers {
        lines.expect_prefix("item [")?;
        let class_line = lines.lines.get(lines.pos).map(|(n, _)| *n).unwrap_or(0);
        let class = lines.string("class")?;
        if class != "IntervalTier" {
            return Err(CorpusError::Parse {
                line: class_line,
                message: format!("unsupported tier class {class:?}"),
            });
        }
        let name = lines.string("name")?;
        lines.number("xmin")?;
        lines.number("xmax")?;
        let n_intervals = lines.count("intervals: size")?;
        speakers.insert(name.clone());
        let mut prev_end = f64::NEG_INFINITY;
        for _ in 0..n_intervals {
            lines.expect_prefix("intervals [")?;
            let (start_line, start) = lines.number("xmin")?;
            let (end_line, end) = lines.number("xmax")?;
            if end < start || start < prev_end - BOUND_SLACK {
                return Err(CorpusError::Parse {
                    line: if end < start { end_line } else { start_line },
                    message: format!(
                        "non-monotone interval bounds [{start}, {end}] after {prev_end}"
                    ),
                });
            }
            prev_end = end;
            let label = lines.string("text")?;
            if !label.trim().is_empty() {
                turns.push(Turn::spoken(name.clone(), start, end, label));
            }
        }
    }
    if let Some(extra) = lines.peek() {
        return Err(CorpusError::Parse {
            line: lines.lines[lines.pos].0,
            message: format!("trailing content `{extra}`"),
        });
    }
    Transcript::new(meeting_id, speakers, turns, duration_s)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Writes the transcript as one interval tier per speaker, filling gaps
/// with empty intervals. Injection metadata is not representable and is
/// dropped.
pub fn emit_textgrid(t: &Transcript) -> Result<String, CorpusError> {
    let end_time = t
        .turns
        .iter()
        .map(|x| x.end_s)
        .fold(t.duration_s, f64::max);
    let mut out = String::new();
    let _ = writeln!(out, "File type = \"ooTextFile\"");
    let _ = writeln!(out, "Object class = \"TextGrid\"");
    let _ = writeln!(out);
    let _ = writeln!(out, "xmin = 0");
    let _ = writeln!(out, "xmax = {end_time}");
    let _ = writeln!(out, "tiers? <exists>");
    let _ = writeln!(out, "size = {}", t.speakers.len());
    let _ = writeln!(out, "item []:");
    for (k, speaker) in t.speakers.iter().enumerate() {
        let mut intervals: Vec<(f64, f64, &str)> = Vec::new();
        let mut cursor = 0.0f64;
        for turn in t.turns.iter().filter(|x| &x.speaker == speaker) {
            if turn.text.contains('\n') {
                return Err(CorpusError::Emit(format!(
                    "turn text at {}s contains a newline",
                    turn.start_s
                )));
            }
            if turn.start_s < cursor {
                return Err(CorpusError::Emit(format!(
                    "speaker {speaker} has overlapping turns at {}s",
                    turn.start_s
                )));
            }
            if turn.start_s > cursor {
                intervals.push((cursor, turn.start_s, ""));
            }
            intervals.push((turn.start_s, turn.end_s, &turn.text));
            cursor = turn.end_s;
        }
        if cursor < end_time || intervals.is_empty() {
            intervals.push((cursor, end_time, ""));
        }
        let _ = writeln!(out, "    item [{}]:", k + 1);
        let _ = writeln!(out, "        class = \"IntervalTier\"");
        let _ = writeln!(out, "        name = {}", quote(speaker));
        let _ = writeln!(out, "        xmin = 0");
        let _ = writeln!(out, "        xmax = {end_time}");
        let _ = writeln!(out, "        intervals: size = {}", intervals.len());
        for (j, (a, b, text)) in intervals.iter().enumerate() {
            let _ = writeln!(out, "            intervals [{}]:", j + 1);
            let _ = writeln!(out, "                xmin = {a}");
            let _ = writeln!(out, "                xmax = {b}");
            let _ = writeln!(out, "                text = {}", quote(text));
        }
    }
    Ok(out)
}
