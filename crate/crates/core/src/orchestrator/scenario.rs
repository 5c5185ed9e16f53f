//! Seeded query scenarios with the evidence world they need: the current
//! meeting's context, a knowledge base, past meetings and web fixtures.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::corpus::synth::{band_quotas, fact_for, filler, render_action_items, render_query, Fact, CODENAMES, N_ATTRIBUTES};
use crate::policy::QueryClass;
use crate::taxonomy::{
    route_label, sample_label, Band, Cd, Cl, ClassDistribution, ClassMapping, ComplexityLabel, Dk, Te,
};
use crate::tools::Document;

/// Turns of current-meeting context in every scenario.
pub const CONTEXT_TURNS: usize = 12;
/// Past meetings available to cross-session search.
pub const HISTORY_MEETINGS: usize = 4;

/// Where a query's answer lives, which decides what it takes to succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One fact in the last few turns.
    Simple,
    /// Three facts spread over the meeting must be combined.
    Synthesis,
    /// One fact stated early in the meeting.
    LongRange,
    /// One fact that only the knowledge base holds.
    FactualKb,
    /// One fact that only the web fixtures hold.
    FactualWeb,
    /// Evidence spread over past meetings.
    Cross,
    /// Answer must be an assigned action list.
    TaskExecution,
}

impl ScenarioKind {
    pub fn for_label(l: &ComplexityLabel) -> Self {
        if l.cd == Cd::CrossMeeting {
            Self::Cross
        } else if l.te == Te::High {
            Self::TaskExecution
        } else if l.dk == Dk::Expert {
            Self::FactualWeb
        } else if l.cl == Cl::High {
            Self::FactualKb
        } else if l.cd == Cd::LongRange {
            Self::LongRange
        } else if route_label(l).is_fast() {
            Self::Simple
        } else {
            Self::Synthesis
        }
    }

    pub fn query_class(self) -> QueryClass {
        match self {
            Self::Cross => QueryClass::CrossMeeting,
            Self::TaskExecution => QueryClass::TaskExecution,
            _ => QueryClass::Factual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub query_id: String,
    pub kind: ScenarioKind,
    pub label: ComplexityLabel,
    pub query: String,
    /// Current-meeting turns, oldest first.
    pub context: Vec<String>,
    pub ground_truth: String,
    pub entity: String,
}

/// Built-in suite compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Only fast-routable queries answerable from recent context.
    Simple,
    /// Medium, High and Cross band queries, weighted as in production.
    Complex,
    /// The enterprise band mix, allocated by largest remainder.
    Mixed,
}

impl FromStr for SuiteKind {
    type Err = OrchestratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(Self::Simple),
            "complex" => Ok(Self::Complex),
            "mixed" | "default" => Ok(Self::Mixed),
            other => Err(OrchestratorError::UnknownSuite(other.to_string())),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Simple => "simple",
            Self::Complex => "complex",
            Self::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSuite {
    pub name: String,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
    pub kb: Vec<Document>,
    /// Past-meeting chunks, ids `Meeting-<id>#<n>`.
    pub history: Vec<Document>,
    pub web: Vec<Document>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum SuiteLine {
    Header { name: String, seed: u64 },
    Scenario(Scenario),
    Kb(Document),
    History(Document),
    Web(Document),
}

impl ScenarioSuite {
    /// One JSON object per line, tagged by `type`; the header comes first.
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![SuiteLine::Header {
            name: self.name.clone(),
            seed: self.seed,
        }];
        lines.extend(self.scenarios.iter().cloned().map(SuiteLine::Scenario));
        lines.extend(self.kb.iter().cloned().map(SuiteLine::Kb));
        lines.extend(self.history.iter().cloned().map(SuiteLine::History));
        lines.extend(self.web.iter().cloned().map(SuiteLine::Web));
        lines
            .iter()
            .map(|l| serde_json::to_string(l).expect("suite serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(bytes: &[u8]) -> Result<Self, OrchestratorError> {
        let text = std::str::from_utf8(bytes).map_err(|e| OrchestratorError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let mut suite = ScenarioSuite {
            name: String::new(),
            seed: 0,
            scenarios: Vec::new(),
            kb: Vec::new(),
            history: Vec::new(),
            web: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: SuiteLine = serde_json::from_str(raw).map_err(|e| OrchestratorError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match line {
                SuiteLine::Header { name, seed } => {
                    suite.name = name;
                    suite.seed = seed;
                }
                SuiteLine::Scenario(s) => suite.scenarios.push(s),
                SuiteLine::Kb(d) => suite.kb.push(d),
                SuiteLine::History(d) => suite.history.push(d),
                SuiteLine::Web(d) => suite.web.push(d),
            }
        }
        if suite.scenarios.is_empty() {
            return Err(OrchestratorError::EmptySuite);
        }
        Ok(suite)
    }

    /// Past-meeting chunks grouped by meeting id.
    pub fn history_by_meeting(&self) -> BTreeMap<String, Vec<Document>> {
        let mut out: BTreeMap<String, Vec<Document>> = BTreeMap::new();
        for d in &self.history {
            let meeting = d.doc_id.split('#').next().unwrap_or(&d.doc_id).to_string();
            out.entry(meeting).or_default().push(d.clone());
        }
        out
    }
}

fn draw_labels(kind: SuiteKind, n: usize, mapping: &ClassMapping, rng: &mut ChaCha8Rng) -> Vec<ComplexityLabel> {
    let dist = ClassDistribution::enterprise_default();
    let from_band = |band: Band, rng: &mut ChaCha8Rng| -> ComplexityLabel {
        let members: Vec<_> = mapping.classes_in_band(band).collect();
        sample_label(members.choose(rng).expect("every band has a class"), rng)
    };
    match kind {
        SuiteKind::Simple => {
            let cells: Vec<ComplexityLabel> = ComplexityLabel::all_cells()
                .into_iter()
                .filter(|l| ScenarioKind::for_label(l) == ScenarioKind::Simple)
                .collect();
            (0..n).map(|_| *cells.choose(rng).expect("simple cells exist")).collect()
        }
        SuiteKind::Complex => {
            let bands = [Band::Medium, Band::High, Band::Cross];
            let total: f64 = bands.iter().map(|b| dist.get(*b)).sum();
            (0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>() * total;
                    let mut band = Band::Cross;
                    for b in bands {
                        if u < dist.get(b) {
                            band = b;
                            break;
                        }
                        u -= dist.get(b);
                    }
                    from_band(band, rng)
                })
                .collect()
        }
        SuiteKind::Mixed => {
            let quotas = band_quotas(&dist, n);
            let mut labels: Vec<ComplexityLabel> = Band::ALL
                .iter()
                .zip(quotas)
                .flat_map(|(&b, q)| std::iter::repeat_n(b, q))
                .collect::<Vec<_>>()
                .into_iter()
                .map(|b| from_band(b, rng))
                .collect();
            labels.shuffle(rng);
            labels
        }
    }
}

/// Context of [`CONTEXT_TURNS`] filler turns with `facts` placed at the
/// given positions and one unrelated fact somewhere else.
fn build_context(placed: &[(usize, &Fact)], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut ctx: Vec<String> = (0..CONTEXT_TURNS).map(|_| filler(rng).to_string()).collect();
    for (pos, f) in placed {
        ctx[*pos] = f.sentence.clone();
    }
    let free: Vec<usize> = (0..CONTEXT_TURNS).filter(|i| placed.iter().all(|(p, _)| p != i)).collect();
    let other = format!("{} {}", CODENAMES.choose(rng).unwrap(), rng.random_range(10..99));
    let distractor = fact_for(&other, rng.random_range(0..N_ATTRIBUTES), rng);
    ctx[*free.choose(rng).expect("free slot")] = distractor.sentence;
    ctx
}

/// Recent-window positions are the last four turns.
fn recent_pos(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(CONTEXT_TURNS - 4..CONTEXT_TURNS)
}

pub fn generate_suite(kind: SuiteKind, n: usize, seed: u64, mapping: &ClassMapping) -> Result<ScenarioSuite, OrchestratorError> {
    if n == 0 {
        return Err(OrchestratorError::EmptySuite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = draw_labels(kind, n, mapping, &mut rng);
    let mut suite = ScenarioSuite {
        name: kind.to_string(),
        seed,
        scenarios: Vec::with_capacity(n),
        kb: Vec::new(),
        history: Vec::new(),
        web: Vec::new(),
    };
    let mut history_turns: Vec<Vec<String>> = vec![Vec::new(); HISTORY_MEETINGS];

    for (i, label) in labels.into_iter().enumerate() {
        // Three-digit suffixes never collide with distractor entities.
        let entity = format!("{} {}", CODENAMES.choose(&mut rng).unwrap(), 100 + i);
        let kind = ScenarioKind::for_label(&label);
        let mut attrs: Vec<usize> = (0..N_ATTRIBUTES).collect();
        attrs.shuffle(&mut rng);
        let fact = fact_for(&entity, attrs[0], &mut rng);
        let query = render_query(&label, &fact, &mut rng);
        let mut ground_truth = fact.sentence.clone();
        let context = match kind {
            ScenarioKind::Simple => build_context(&[(recent_pos(&mut rng), &fact)], &mut rng),
            ScenarioKind::TaskExecution => {
                ground_truth = render_action_items(&fact, &mut rng);
                build_context(&[(recent_pos(&mut rng), &fact)], &mut rng)
            }
            ScenarioKind::LongRange => build_context(&[(rng.random_range(0..2), &fact)], &mut rng),
            ScenarioKind::Synthesis => {
                let second = fact_for(&entity, attrs[1], &mut rng);
                let third = fact_for(&entity, attrs[2], &mut rng);
                let placed = [
                    (rng.random_range(0..3), &fact),
                    (rng.random_range(4..7), &second),
                    (recent_pos(&mut rng), &third),
                ];
                ground_truth = format!("{} {} {}", fact.sentence, second.sentence, third.sentence);
                build_context(&placed, &mut rng)
            }
            ScenarioKind::FactualKb => {
                suite.kb.push(Document::new(
                    format!("KB-{i:04}"),
                    format!("{} This entry was last reviewed by the programme office.", fact.sentence),
                ));
                build_context(&[], &mut rng)
            }
            ScenarioKind::FactualWeb => {
                suite.web.push(Document::new(
                    format!("WEB-{i:04}"),
                    format!("{} Source: public filing.", fact.sentence),
                ));
                build_context(&[], &mut rng)
            }
            ScenarioKind::Cross => {
                let skip = rng.random_range(0..HISTORY_MEETINGS);
                for (m, turns) in history_turns.iter_mut().enumerate() {
                    if m != skip {
                        turns.push(fact.sentence.clone());
                    }
                }
                build_context(&[], &mut rng)
            }
        };
        suite.scenarios.push(Scenario {
            query_id: format!("{}-{i:04}", suite.name),
            kind,
            label,
            query,
            context,
            ground_truth,
            entity,
        });
    }

    // Distractor documents so no source is trivially small.
    for j in 0..20 {
        let other = format!("{} {}", CODENAMES.choose(&mut rng).unwrap(), rng.random_range(10..99));
        let f = fact_for(&other, rng.random_range(0..N_ATTRIBUTES), &mut rng);
        suite.kb.push(Document::new(format!("KB-X{j:02}"), f.sentence));
        let g = fact_for(&other, rng.random_range(0..N_ATTRIBUTES), &mut rng);
        suite.web.push(Document::new(format!("WEB-X{j:02}"), g.sentence));
    }
    for (m, mut turns) in history_turns.into_iter().enumerate() {
        for _ in 0..8 {
            turns.push(filler(&mut rng).to_string());
        }
        turns.shuffle(&mut rng);
        for (k, pair) in turns.chunks(2).enumerate() {
            suite.history.push(Document {
                doc_id: format!("Meeting-H{m}#{k}"),
                text: pair.join(" "),
                timestamp_s: Some(m as f64 * 7.0 * 86_400.0 + k as f64 * 60.0),
            });
        }
    }
    Ok(suite)
}
