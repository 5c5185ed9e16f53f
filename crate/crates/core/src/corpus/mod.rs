//! Meeting transcript ingestion, segmentation, query injection and
//! leakage-safe split verification.

mod jsonl;
pub mod synth;
mod textgrid;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{
    sample_class, sample_label, Band, Cd, ClassDistribution, ClassMapping, ComplexityLabel,
    TaxonomyError,
};

pub use jsonl::{emit_jsonl, parse_jsonl_corpus, parse_jsonl_turns};
pub use textgrid::{emit_textgrid, parse_textgrid};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate turn at line {line}: speaker {speaker} already has a turn at {start_s}s")]
    DuplicateTurn {
        line: usize,
        speaker: String,
        start_s: f64,
    },
    #[error("invalid transcript {meeting_id}: {message}")]
    InvalidTranscript { meeting_id: String, message: String },
    #[error("cross-meeting injection from {source_meeting} ({source_split:?}) into {target} ({target_split:?}) crosses splits")]
    SplitViolation {
        source_meeting: String,
        target: String,
        source_split: Option<Split>,
        target_split: Option<Split>,
    },
    #[error("source and target are the same meeting {0}")]
    SameMeeting(String),
    #[error("corpus has no injected turns")]
    EmptyCorpus,
    #[error("cannot emit transcript: {0}")]
    Emit(String),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    En,
    Zh,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    #[serde(default)]
    pub injected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    /// Meeting the ground truth was drawn from, for cross-meeting queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_meeting: Option<String>,
    /// Alignment metadata; kept opaque.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Turn {
    pub fn spoken(speaker: impl Into<String>, start_s: f64, end_s: f64, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            start_s,
            end_s,
            text: text.into(),
            injected: false,
            complexity: None,
            ground_truth: None,
            source_meeting: None,
            metadata: BTreeMap::new(),
        }
    }
}

/// Canonical turn order: start time, then speaker, then end time.
fn turn_order(a: &Turn, b: &Turn) -> std::cmp::Ordering {
    a.start_s
        .total_cmp(&b.start_s)
        .then_with(|| a.speaker.cmp(&b.speaker))
        .then_with(|| a.end_s.total_cmp(&b.end_s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub meeting_id: String,
    /// Original recording this transcript was cut from; `None` for whole meetings.
    pub recording_id: Option<String>,
    pub language: Language,
    pub domain_tag: String,
    pub duration_s: f64,
    pub speakers: BTreeSet<String>,
    pub turns: Vec<Turn>,
}

impl Transcript {
    /// Sorts turns canonically and checks the transcript invariants.
    pub fn new(
        meeting_id: impl Into<String>,
        speakers: BTreeSet<String>,
        mut turns: Vec<Turn>,
        duration_s: f64,
    ) -> Result<Self, CorpusError> {
        turns.sort_by(turn_order);
        let t = Self {
            meeting_id: meeting_id.into(),
            recording_id: None,
            language: Language::Other,
            domain_tag: String::new(),
            duration_s,
            speakers,
            turns,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |message: String| CorpusError::InvalidTranscript {
            meeting_id: self.meeting_id.clone(),
            message,
        };
        let mut prev_start = f64::NEG_INFINITY;
        for (i, t) in self.turns.iter().enumerate() {
            if !(t.start_s.is_finite() && t.end_s.is_finite()) {
                return Err(bad(format!("turn {i} has non-finite times")));
            }
            if t.end_s < t.start_s {
                return Err(bad(format!("turn {i} ends before it starts")));
            }
            if t.start_s < prev_start {
                return Err(bad(format!("turn {i} is out of order")));
            }
            prev_start = t.start_s;
            if !self.speakers.contains(&t.speaker) {
                return Err(bad(format!("turn {i} speaker {} not in speaker set", t.speaker)));
            }
            if t.injected && t.complexity.is_none() {
                return Err(bad(format!("injected turn {i} has no complexity label")));
            }
        }
        Ok(())
    }

    /// Original recording id (itself when not a segment).
    pub fn recording(&self) -> &str {
        self.recording_id.as_deref().unwrap_or(&self.meeting_id)
    }

    pub fn injected_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.injected)
    }

    /// Inserts a turn, keeping turns ordered by start time.
    pub fn insert_turn(&mut self, turn: Turn) {
        let pos = self
            .turns
            .partition_point(|t| turn_order(t, &turn) != std::cmp::Ordering::Greater);
        self.turns.insert(pos, turn);
    }

    /// Speaker who most recently started talking at or before `t`.
    fn speaker_at(&self, t: f64) -> String {
        self.turns
            .iter()
            .rev()
            .find(|x| !x.injected && x.start_s <= t)
            .map(|x| x.speaker.clone())
            .or_else(|| self.speakers.iter().next().cloned())
            .unwrap_or_else(|| format!("{}-asker", self.meeting_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub meeting_id: String,
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub turns: Vec<Turn>,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Standalone transcript for this window with times rebased to zero.
    pub fn to_transcript(&self, parent: &Transcript) -> Transcript {
        let turns: Vec<Turn> = self
            .turns
            .iter()
            .map(|t| Turn {
                start_s: t.start_s - self.start_s,
                end_s: t.end_s - self.start_s,
                ..t.clone()
            })
            .collect();
        let speakers = turns.iter().map(|t| t.speaker.clone()).collect();
        Transcript {
            meeting_id: self.segment_id.clone(),
            recording_id: Some(parent.recording().to_string()),
            language: parent.language,
            domain_tag: parent.domain_tag.clone(),
            duration_s: self.duration_s(),
            speakers,
            turns,
        }
    }
}

/// Cuts a transcript into consecutive `unit_s` windows; turns are assigned
/// by start time and the last window may be short.
pub fn segment(transcript: &Transcript, unit_s: f64) -> Vec<Segment> {
    assert!(unit_s > 0.0, "segment unit must be positive");
    let duration = transcript
        .duration_s
        .max(transcript.turns.iter().map(|t| t.start_s).fold(0.0, f64::max));
    let n = ((duration / unit_s).ceil() as usize).max(1);
    let mut segments: Vec<Segment> = (0..n)
        .map(|k| Segment {
            segment_id: format!("{}#{k}", transcript.meeting_id),
            meeting_id: transcript.meeting_id.clone(),
            index: k,
            start_s: k as f64 * unit_s,
            end_s: ((k + 1) as f64 * unit_s).min(duration),
            turns: Vec::new(),
        })
        .collect();
    for turn in &transcript.turns {
        let k = ((turn.start_s / unit_s).floor().max(0.0) as usize).min(n - 1);
        segments[k].turns.push(turn.clone());
    }
    segments
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub segment_id: String,
    /// Offset within the segment, in `(0, duration]`.
    pub offset_s: f64,
    /// Absolute time in the parent meeting.
    pub at_s: f64,
    pub sampled_class: u8,
    pub label: ComplexityLabel,
}

/// Offsets `spacing_s, 2·spacing_s, …` that fit inside the segment.
pub fn injection_offsets(segment: &Segment, spacing_s: f64) -> Vec<f64> {
    assert!(spacing_s > 0.0, "injection spacing must be positive");
    let count = (segment.duration_s() / spacing_s + 1e-9).floor() as usize;
    (1..=count).map(|k| k as f64 * spacing_s).collect()
}

/// Injection points at `spacing_s, 2·spacing_s, …` inside the segment, each
/// with a class drawn from `dist` and a cell drawn uniformly within it.
pub fn schedule_injections<R: Rng + ?Sized>(
    segment: &Segment,
    spacing_s: f64,
    dist: &ClassDistribution,
    mapping: &ClassMapping,
    rng: &mut R,
) -> Result<Vec<InjectionPoint>, CorpusError> {
    let offsets = injection_offsets(segment, spacing_s);
    let mut points = Vec::with_capacity(offsets.len());
    for offset_s in offsets {
        let class = sample_class(dist, mapping, rng)?;
        let label = sample_label(class, rng);
        points.push(InjectionPoint {
            segment_id: segment.segment_id.clone(),
            offset_s,
            at_s: segment.start_s + offset_s,
            sampled_class: class.id,
            label,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub meetings: BTreeMap<String, Split>,
    #[serde(default)]
    pub speakers: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, meeting_id: &str) -> Option<Split> {
        self.meetings.get(meeting_id).copied()
    }
}

/// Inserts a zero-length injected query at `point.at_s` in `target`.
pub fn inject_query(
    target: &mut Transcript,
    point: &InjectionPoint,
    turn_text: &str,
    ground_truth: Option<String>,
) -> Turn {
    let turn = Turn {
        speaker: target.speaker_at(point.at_s),
        start_s: point.at_s,
        end_s: point.at_s,
        text: turn_text.to_string(),
        injected: true,
        complexity: Some(point.label),
        ground_truth,
        source_meeting: None,
        metadata: BTreeMap::from([("class".to_string(), point.sampled_class.to_string())]),
    };
    target.speakers.insert(turn.speaker.clone());
    target.insert_turn(turn.clone());
    turn
}

/// Injects a cross-meeting query whose evidence lives in `source`. Source
/// and target must be distinct meetings of the same split.
pub fn inject_cross_meeting(
    source: &Transcript,
    target: &mut Transcript,
    splits: &SplitAssignment,
    point: &InjectionPoint,
    turn_text: &str,
    ground_truth: Option<String>,
) -> Result<Turn, CorpusError> {
    if source.meeting_id == target.meeting_id {
        return Err(CorpusError::SameMeeting(source.meeting_id.clone()));
    }
    let source_split = splits.split_of(&source.meeting_id);
    let target_split = splits.split_of(&target.meeting_id);
    if source_split.is_none() || source_split != target_split {
        return Err(CorpusError::SplitViolation {
            source_meeting: source.meeting_id.clone(),
            target: target.meeting_id.clone(),
            source_split,
            target_split,
        });
    }
    let mut label = point.label;
    label.cd = Cd::CrossMeeting;
    let mut turn = Turn {
        speaker: target.speaker_at(point.at_s),
        start_s: point.at_s,
        end_s: point.at_s,
        text: turn_text.to_string(),
        injected: true,
        complexity: Some(label),
        ground_truth,
        source_meeting: Some(source.meeting_id.clone()),
        metadata: BTreeMap::new(),
    };
    turn.metadata
        .insert("class".to_string(), point.sampled_class.to_string());
    target.speakers.insert(turn.speaker.clone());
    target.insert_turn(turn.clone());
    Ok(turn)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerLeak {
    pub speaker: String,
    pub splits: BTreeSet<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionLeak {
    pub meeting_id: String,
    pub turn_index: usize,
    pub source_meeting: String,
    pub source_split: Option<Split>,
    pub target_split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingLeak {
    pub recording_id: String,
    pub splits: BTreeSet<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub speakers_spanning_splits: Vec<SpeakerLeak>,
    pub cross_split_injections: Vec<InjectionLeak>,
    pub recordings_spanning_splits: Vec<RecordingLeak>,
    pub unassigned_meetings: Vec<String>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.speakers_spanning_splits.is_empty()
            && self.cross_split_injections.is_empty()
            && self.recordings_spanning_splits.is_empty()
            && self.unassigned_meetings.is_empty()
    }
}

/// Checks speaker-disjointness, same-split cross-meeting injection and that
/// segments of one recording stay in one split.
pub fn verify_splits(corpus: &[Transcript], splits: &SplitAssignment) -> LeakageReport {
    let mut report = LeakageReport::default();
    let mut speaker_splits: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    for (speaker, split) in &splits.speakers {
        speaker_splits.entry(speaker.clone()).or_default().insert(*split);
    }
    let mut recording_splits: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();

    for t in corpus {
        let Some(split) = splits.split_of(&t.meeting_id) else {
            report.unassigned_meetings.push(t.meeting_id.clone());
            continue;
        };
        recording_splits
            .entry(t.recording().to_string())
            .or_default()
            .insert(split);
        for speaker in &t.speakers {
            speaker_splits.entry(speaker.clone()).or_default().insert(split);
        }
        for (i, turn) in t.turns.iter().enumerate() {
            speaker_splits
                .entry(turn.speaker.clone())
                .or_default()
                .insert(split);
            if let (true, Some(src)) = (turn.injected, &turn.source_meeting) {
                let source_split = splits.split_of(src);
                if source_split != Some(split) {
                    report.cross_split_injections.push(InjectionLeak {
                        meeting_id: t.meeting_id.clone(),
                        turn_index: i,
                        source_meeting: src.clone(),
                        source_split,
                        target_split: Some(split),
                    });
                }
            }
        }
    }
    report.speakers_spanning_splits = speaker_splits
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(speaker, splits)| SpeakerLeak { speaker, splits })
        .collect();
    report.recordings_spanning_splits = recording_splits
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(recording_id, splits)| RecordingLeak {
            recording_id,
            splits,
        })
        .collect();
    report
}

/// Normalized band frequencies over injected turns.
pub fn class_distribution(corpus: &[Transcript]) -> Result<ClassDistribution, CorpusError> {
    let mut counts: BTreeMap<Band, usize> = BTreeMap::new();
    let mut total = 0usize;
    for turn in corpus.iter().flat_map(|t| t.injected_turns()) {
        if let Some(label) = turn.complexity {
            *counts.entry(label.band()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let weights = counts
        .into_iter()
        .map(|(b, c)| (b, c as f64 / total as f64))
        .collect();
    Ok(ClassDistribution { weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{Cl, Dk, Te};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meeting(id: &str, speakers: &[&str], duration: f64) -> Transcript {
        let turns = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| Turn::spoken(*s, i as f64 * 10.0, i as f64 * 10.0 + 5.0, format!("hello from {s}")))
            .collect();
        Transcript::new(id, speakers.iter().map(|s| s.to_string()).collect(), turns, duration).unwrap()
    }

    fn point(at: f64) -> InjectionPoint {
        InjectionPoint {
            segment_id: "x#0".into(),
            offset_s: at,
            at_s: at,
            sampled_class: 12,
            label: ComplexityLabel::new(Cl::Low, Cd::Recent, Dk::General, Te::Low),
        }
    }

    #[test]
    fn two_hour_meeting_gives_four_segments() {
        let mut t = meeting("m", &["a", "b"], 7200.0);
        t.turns.push(Turn::spoken("a", 7000.0, 7100.0, "late"));
        let segs = segment(&t, 1800.0);
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[3].turns.len(), 1);
        assert_eq!(segs.iter().map(|s| s.turns.len()).sum::<usize>(), t.turns.len());
    }

    #[test]
    fn short_meeting_single_segment() {
        let t = meeting("m", &["a"], 100.0);
        let segs = segment(&t, 1800.0);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].duration_s(), 100.0);
    }

    #[test]
    fn straddling_turn_goes_to_start_window() {
        let t = Transcript::new(
            "m",
            ["a".to_string()].into(),
            vec![Turn::spoken("a", 1790.0, 1830.0, "straddle")],
            3600.0,
        )
        .unwrap();
        let segs = segment(&t, 1800.0);
        assert_eq!(segs[0].turns.len(), 1);
        assert!(segs[1].turns.is_empty());
    }

    #[test]
    fn injection_schedule_counts() {
        let mapping = ClassMapping::default_mapping();
        let dist = ClassDistribution::enterprise_default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = meeting("m", &["a"], 1800.0);
        let seg = &segment(&t, 1800.0)[0];
        let pts = schedule_injections(seg, 300.0, &dist, &mapping, &mut rng).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts.last().unwrap().offset_s, 1800.0);
        assert!(pts.iter().all(|p| p.offset_s > 0.0 && p.offset_s <= 1800.0));

        let short = meeting("s", &["a"], 200.0);
        let seg = &segment(&short, 1800.0)[0];
        assert!(schedule_injections(seg, 300.0, &dist, &mapping, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn injection_schedule_deterministic() {
        let mapping = ClassMapping::default_mapping();
        let dist = ClassDistribution::enterprise_default();
        let t = meeting("m", &["a"], 1800.0);
        let seg = &segment(&t, 1800.0)[0];
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            schedule_injections(seg, 300.0, &dist, &mapping, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    fn two_splits() -> SplitAssignment {
        SplitAssignment {
            meetings: BTreeMap::from([
                ("a".into(), Split::Train),
                ("b".into(), Split::Train),
                ("c".into(), Split::Test),
            ]),
            speakers: BTreeMap::new(),
        }
    }

    #[test]
    fn cross_meeting_injection_rules() {
        let splits = two_splits();
        let a = meeting("a", &["x"], 600.0);
        let mut b = meeting("b", &["y"], 600.0);
        let mut c = meeting("c", &["z"], 600.0);

        let turn = inject_cross_meeting(&a, &mut b, &splits, &point(300.0), "q?", Some("gt".into())).unwrap();
        assert_eq!(turn.complexity.unwrap().cd, Cd::CrossMeeting);
        assert_eq!(turn.start_s, turn.end_s);
        assert_eq!(turn.source_meeting.as_deref(), Some("a"));
        assert!(b.turns.iter().any(|t| t.injected));
        b.validate().unwrap();

        assert!(matches!(
            inject_cross_meeting(&a, &mut c, &splits, &point(300.0), "q?", None),
            Err(CorpusError::SplitViolation { .. })
        ));
        let a2 = a.clone();
        let mut a3 = a.clone();
        assert!(matches!(
            inject_cross_meeting(&a2, &mut a3, &splits, &point(300.0), "q?", None),
            Err(CorpusError::SameMeeting(_))
        ));
    }

    #[test]
    fn verify_splits_detects_each_leak_kind() {
        let splits = two_splits();
        let a = meeting("a", &["x"], 600.0);
        let b = meeting("b", &["y"], 600.0);
        let c = meeting("c", &["z"], 600.0);
        assert!(verify_splits(&[a.clone(), b.clone(), c.clone()], &splits).is_clean());

        // Speaker in Train and Test.
        let c_leak = meeting("c", &["x"], 600.0);
        let r = verify_splits(&[a.clone(), b.clone(), c_leak], &splits);
        assert_eq!(r.speakers_spanning_splits.len(), 1);
        assert_eq!(r.speakers_spanning_splits[0].speaker, "x");

        // Test-sourced injection in Train.
        let mut b_leak = b.clone();
        let mut turn = Turn::spoken("y", 100.0, 100.0, "what did they decide last time?");
        turn.injected = true;
        turn.complexity = Some(ComplexityLabel::new(Cl::Low, Cd::CrossMeeting, Dk::General, Te::Low));
        turn.source_meeting = Some("c".into());
        b_leak.insert_turn(turn);
        let r = verify_splits(&[a.clone(), b_leak, c.clone()], &splits);
        assert_eq!(r.cross_split_injections.len(), 1);
        assert_eq!(r.cross_split_injections[0].meeting_id, "b");

        // Two segments of one recording in different splits.
        let mut seg_a = a.clone();
        seg_a.meeting_id = "a#0".into();
        seg_a.recording_id = Some("a".into());
        let mut seg_c = c.clone();
        seg_c.meeting_id = "a#1".into();
        seg_c.recording_id = Some("a".into());
        let mut s2 = splits.clone();
        s2.meetings.insert("a#0".into(), Split::Train);
        s2.meetings.insert("a#1".into(), Split::Test);
        let r = verify_splits(&[seg_a, seg_c], &s2);
        assert_eq!(r.recordings_spanning_splits.len(), 1);
        assert_eq!(r.recordings_spanning_splits[0].recording_id, "a");
    }

    #[test]
    fn class_distribution_single_band() {
        let mut t = meeting("m", &["a"], 900.0);
        inject_query(&mut t, &point(300.0), "q", None);
        inject_query(&mut t, &point(600.0), "q", None);
        let d = class_distribution(&[t]).unwrap();
        assert_eq!(d.weights, BTreeMap::from([(Band::Medium, 1.0)]));
        assert!(matches!(
            class_distribution(&[meeting("e", &["a"], 10.0)]),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn injected_turn_requires_label() {
        let mut turn = Turn::spoken("a", 1.0, 1.0, "q");
        turn.injected = true;
        assert!(Transcript::new("m", ["a".to_string()].into(), vec![turn], 10.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn segmentation_preserves_turns(starts in proptest::collection::vec(0.0f64..10_000.0, 0..60), unit in 60.0f64..4000.0) {
                let turns: Vec<Turn> = starts.iter().map(|&s| Turn::spoken("a", s, s + 1.0, "x")).collect();
                let t = Transcript::new("m", ["a".to_string()].into(), turns, 10_001.0).unwrap();
                let segs = segment(&t, unit);
                let mut seen: Vec<f64> = segs.iter().flat_map(|s| s.turns.iter().map(|t| t.start_s)).collect();
                let mut want: Vec<f64> = t.turns.iter().map(|t| t.start_s).collect();
                seen.sort_by(f64::total_cmp);
                want.sort_by(f64::total_cmp);
                prop_assert_eq!(seen, want);
                for s in &segs {
                    prop_assert!(s.turns.iter().all(|t| t.start_s >= s.start_s));
                }
            }

            #[test]
            fn schedule_count_is_floor(duration in 1.0f64..5000.0, spacing in 10.0f64..900.0, seed in 0u64..1000) {
                let t = Transcript::new("m", ["a".to_string()].into(), vec![], duration).unwrap();
                let seg = &segment(&t, 1e9)[0];
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts = schedule_injections(seg, spacing, &ClassDistribution::enterprise_default(), &ClassMapping::default_mapping(), &mut rng).unwrap();
                prop_assert_eq!(pts.len(), (duration / spacing + 1e-9).floor() as usize);
            }

            #[test]
            fn cross_injection_never_crosses_splits(assign in proptest::collection::vec(0u8..3, 4), src in 0usize..4, dst in 0usize..4) {
                let ids = ["m0", "m1", "m2", "m3"];
                let split = |k: u8| match k { 0 => Split::Train, 1 => Split::Dev, _ => Split::Test };
                let splits = SplitAssignment {
                    meetings: ids.iter().zip(&assign).map(|(id, k)| (id.to_string(), split(*k))).collect(),
                    speakers: BTreeMap::new(),
                };
                let source = meeting(ids[src], &["s"], 600.0);
                let mut target = meeting(ids[dst], &["t"], 600.0);
                let res = inject_cross_meeting(&source, &mut target, &splits, &point(300.0), "q", None);
                if res.is_ok() {
                    prop_assert_ne!(src, dst);
                    prop_assert_eq!(assign[src], assign[dst]);
                } else {
                    prop_assert!(src == dst || assign[src] != assign[dst]);
                }
            }
        }
    }
}
