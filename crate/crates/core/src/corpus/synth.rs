//! Deterministic synthetic meeting corpus in the same shape as the real
//! data: speaker-disjoint splits, half-hour segments, a query injected every
//! few minutes with a complexity label and a ground-truth answer.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    inject_cross_meeting, inject_query, injection_offsets, segment, CorpusError, InjectionPoint,
    Language, Split, SplitAssignment, Transcript, Turn,
};
use crate::taxonomy::{
    sample_label, Band, Cd, Cl, ClassDistribution, ClassMapping, ComplexityLabel, Dk, Te,
};

pub const CODENAMES: &[&str] = &[
    "aurora", "beacon", "cobalt", "delta", "ember", "falcon", "granite", "harbor", "iris",
    "juniper", "kestrel", "lumen", "meridian", "nimbus", "orchid", "pioneer", "quartz", "raven",
    "sierra", "tundra", "umbra", "vertex", "willow", "zephyr",
];

const ATTRIBUTES: &[(&str, &[&str])] = &[
    ("launch date", &["march", "april", "june", "september", "november"]),
    ("budget", &["forty thousand", "eighty thousand", "two hundred thousand", "half a million"]),
    ("owner", &["the platform team", "the data team", "finance", "legal", "the mobile squad"]),
    ("risk", &["supplier delay", "data migration", "audit findings", "hiring gaps", "latency regressions"]),
    ("target", &["ten percent growth", "sub second latency", "zero critical incidents", "two new regions"]),
];

const FILLER: &[&str] = &[
    "Okay, good, let us keep moving through the agenda.",
    "I think we should revisit that after the break.",
    "Can everyone see the shared screen now?",
    "That sounds reasonable to me, any objections?",
    "Let me check my notes on that quickly.",
    "We discussed something similar last quarter.",
    "I agree, but we need more data before deciding.",
    "Good point, please add it to the tracker.",
    "Right, so the main concern is still the timeline.",
    "Sorry, could you repeat the last part?",
];

pub const PEOPLE: &[&str] = &[
    "alice", "bruno", "chen", "dana", "emre", "fatima", "goran", "hana", "ivan", "jiaojiao",
];

/// A single statement made in a meeting; the unit of ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub entity: String,
    pub attribute: String,
    pub value: String,
    pub sentence: String,
}

pub const N_ATTRIBUTES: usize = ATTRIBUTES.len();

pub fn random_fact<R: Rng + ?Sized>(rng: &mut R) -> Fact {
    let entity = format!("{} {}", CODENAMES.choose(rng).unwrap(), rng.random_range(10..99));
    let attribute = rng.random_range(0..N_ATTRIBUTES);
    fact_for(&entity, attribute, rng)
}

/// A fact about `entity` on the attribute with index `attribute`.
pub fn fact_for<R: Rng + ?Sized>(entity: &str, attribute: usize, rng: &mut R) -> Fact {
    let (attribute, values) = ATTRIBUTES[attribute % N_ATTRIBUTES];
    let value = values.choose(rng).unwrap().to_string();
    let sentence = match rng.random_range(0..3) {
        0 => format!("For project {entity} the {attribute} is {value}, that is what we agreed."),
        1 => format!("We confirmed that the {attribute} of project {entity} will be {value}."),
        _ => format!("Just to record it, project {entity} has {value} as its {attribute}."),
    };
    Fact {
        entity: entity.to_string(),
        attribute: attribute.to_string(),
        value,
        sentence,
    }
}

/// A content-free meeting utterance.
pub fn filler<R: Rng + ?Sized>(rng: &mut R) -> &'static str {
    FILLER.choose(rng).unwrap()
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, options: &[&'a str]) -> &'a str {
    options.choose(rng).copied().unwrap_or("")
}

/// Natural-language query whose phrasing carries cues for each axis level.
pub fn render_query<R: Rng + ?Sized>(label: &ComplexityLabel, fact: &Fact, rng: &mut R) -> String {
    let ask = match label.cl {
        Cl::Low => pick(rng, &["what did we say was", "remind me what is", "what is"]),
        Cl::Medium => pick(rng, &["summarize and compare", "explain how we settled", "walk me through"]),
        Cl::High => pick(rng, &[
            "analyze the trade-offs and infer the consequences of",
            "reason about the implications and hidden risks of",
            "evaluate the strategy behind",
        ]),
    };
    let when = match label.cd {
        Cd::None => "",
        Cd::Recent => pick(rng, &[" as mentioned a moment ago", " from what was just said"]),
        Cd::LongRange => pick(rng, &[" as discussed at the start of this meeting", " from the opening discussion earlier today"]),
        Cd::CrossMeeting => pick(rng, &[" based on our previous meeting", " from last week's session"]),
    };
    let domain = match label.dk {
        Dk::General => "",
        Dk::Basic => pick(rng, &[" in plain budget terms", " using our usual planning terms"]),
        Dk::Expert => pick(rng, &[
            " considering discounted cash flow and regulatory capital",
            " with respect to amortization schedules and compliance audits",
        ]),
    };
    let act = match label.te {
        Te::Low => "",
        Te::Medium => pick(rng, &[" and list the next steps", " and note the follow-ups"]),
        Te::High => pick(rng, &[
            " then draft action items with owners and deadlines",
            " then assign tasks to owners and schedule the work",
        ]),
    };
    format!(
        "Hello Jiaojiao, {ask} the {} of project {}{when}{domain}{act}?",
        fact.attribute, fact.entity
    )
}

/// Bullet list with assignees, the shape task-execution answers take.
pub fn render_action_items<R: Rng + ?Sized>(fact: &Fact, rng: &mut R) -> String {
    let a = pick(rng, PEOPLE);
    let b = pick(rng, PEOPLE);
    format!(
        "- Confirm the {} of project {} as {} (owner: {a})\n- Share the updated plan with the team @{b}",
        fact.attribute, fact.entity, fact.value
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub meetings: usize,
    pub injected_turns: usize,
    pub spacing_s: f64,
    pub segment_s: f64,
    /// Train / dev / test meeting fractions.
    pub split_fractions: [f64; 3],
    pub dist: ClassDistribution,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            meetings: 231,
            injected_turns: 1180,
            spacing_s: 300.0,
            segment_s: 1800.0,
            split_fractions: [0.7, 0.1, 0.2],
            dist: ClassDistribution::enterprise_default(),
            seed: 2025,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub transcripts: Vec<Transcript>,
    pub splits: SplitAssignment,
    /// Facts spoken in each meeting, by meeting id.
    pub facts: BTreeMap<String, Vec<Fact>>,
}

/// Largest-remainder allocation of `n` items to bands by weight.
pub fn band_quotas(dist: &ClassDistribution, n: usize) -> [usize; 4] {
    let weights = dist.to_vec();
    let mut counts = [0usize; 4];
    let mut rema: Vec<(usize, f64)> = Vec::new();
    for (i, w) in weights.iter().enumerate() {
        let exact = w * n as f64;
        counts[i] = exact.floor() as usize;
        rema.push((i, exact - exact.floor()));
    }
    let mut left = n - counts.iter().sum::<usize>();
    rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in rema {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn domain_for<R: Rng + ?Sized>(rng: &mut R) -> &'static str {
    let u: f64 = rng.random();
    match u {
        u if u < 0.42 => "product",
        u if u < 0.73 => "technical",
        u if u < 0.91 => "ops",
        _ => "compliance",
    }
}

/// Builds the corpus. Band counts follow the distribution exactly (largest
/// remainder); classes within a band and cells within a class are uniform.
pub fn generate_corpus(cfg: &SynthConfig, mapping: &ClassMapping) -> Result<SyntheticCorpus, CorpusError> {
    cfg.dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.meetings.max(1);

    let ids: Vec<String> = (0..n).map(|i| format!("M{i:03}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((cfg.split_fractions[0] * n as f64).round() as usize).clamp(1, n);
    let n_dev = ((cfg.split_fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut splits = SplitAssignment::default();
    for (rank, &i) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        splits.meetings.insert(ids[i].clone(), split);
    }

    // Speaker pools are disjoint per split.
    let mut pools: BTreeMap<Split, Vec<String>> = BTreeMap::new();
    let mut next_speaker = 0usize;
    for split in [Split::Train, Split::Dev, Split::Test] {
        let meetings_in = splits.meetings.values().filter(|s| **s == split).count();
        let size = (meetings_in / 2).max(6);
        let pool: Vec<String> = (0..size)
            .map(|k| format!("SPK{:04}", next_speaker + k))
            .collect();
        next_speaker += size;
        for s in &pool {
            splits.speakers.insert(s.clone(), split);
        }
        pools.insert(split, pool);
    }

    // Per-meeting injection counts summing to the target.
    let base = cfg.injected_turns / n;
    let mut counts = vec![base; n];
    let mut extra: Vec<usize> = (0..n).collect();
    extra.shuffle(&mut rng);
    for &i in extra.iter().take(cfg.injected_turns - base * n) {
        counts[i] += 1;
    }

    // Spoken content.
    let mut transcripts = Vec::with_capacity(n);
    let mut facts: BTreeMap<String, Vec<Fact>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let split = splits.meetings[id];
        let duration = counts[i] as f64 * cfg.spacing_s + rng.random_range(0.0..cfg.spacing_s * 0.9);
        let k = rng.random_range(3..=5);
        let speakers: Vec<String> = pools[&split].choose_multiple(&mut rng, k).cloned().collect();
        let mut turns = Vec::new();
        let mut meeting_facts = Vec::new();
        let mut t = rng.random_range(2.0..15.0);
        while t < duration - 1.0 {
            let len: f64 = rng.random_range(2.0..12.0f64).min(duration - t);
            let speaker = speakers.choose(&mut rng).unwrap().clone();
            let text = if rng.random_bool(0.3) {
                let fact = random_fact(&mut rng);
                let s = fact.sentence.clone();
                meeting_facts.push(fact);
                s
            } else {
                pick(&mut rng, FILLER).to_string()
            };
            turns.push(Turn::spoken(speaker, t, t + len, text));
            t += len + rng.random_range(5.0..40.0);
        }
        if meeting_facts.is_empty() {
            let fact = random_fact(&mut rng);
            turns.push(Turn::spoken(speakers[0].clone(), 1.0, 1.5, fact.sentence.clone()));
            meeting_facts.push(fact);
        }
        let mut tr = Transcript::new(id.clone(), speakers.into_iter().collect(), turns, duration)?;
        tr.language = if rng.random_bool(0.706) { Language::Zh } else { Language::En };
        tr.domain_tag = domain_for(&mut rng).to_string();
        facts.insert(id.clone(), meeting_facts);
        transcripts.push(tr);
    }

    // Band per injection slot, exact quota then shuffled.
    let quotas = band_quotas(&cfg.dist, cfg.injected_turns);
    let mut slots: Vec<Band> = Band::ALL
        .iter()
        .flat_map(|b| std::iter::repeat_n(*b, quotas[b.index()]))
        .collect();
    slots.shuffle(&mut rng);
    let mut slot_iter = slots.into_iter();

    let by_split: BTreeMap<Split, Vec<usize>> = (0..n).fold(BTreeMap::new(), |mut acc, i| {
        acc.entry(splits.meetings[&ids[i]]).or_default().push(i);
        acc
    });

    for i in 0..n {
        let snapshot = transcripts[i].clone();
        for seg in segment(&snapshot, cfg.segment_s) {
            for offset in injection_offsets(&seg, cfg.spacing_s) {
                let Some(band) = slot_iter.next() else { break };
                let classes: Vec<_> = mapping.classes_in_band(band).collect();
                let class = *classes.choose(&mut rng).ok_or_else(|| {
                    CorpusError::Taxonomy(crate::taxonomy::TaxonomyError::InvalidDistribution(
                        format!("no class for band {band:?}"),
                    ))
                })?;
                let label = sample_label(class, &mut rng);
                let point = InjectionPoint {
                    segment_id: seg.segment_id.clone(),
                    offset_s: offset,
                    at_s: seg.start_s + offset,
                    sampled_class: class.id,
                    label,
                };
                let split = splits.meetings[&ids[i]];
                let peers: Vec<usize> = by_split[&split].iter().copied().filter(|&j| j != i).collect();
                if band == Band::Cross && !peers.is_empty() {
                    let j = *peers.choose(&mut rng).unwrap();
                    let fact = facts[&ids[j]].choose(&mut rng).unwrap().clone();
                    let gt = ground_truth(&label, &fact, &mut rng);
                    let text = render_query(&label, &fact, &mut rng);
                    let source = transcripts[j].clone();
                    inject_cross_meeting(&source, &mut transcripts[i], &splits, &point, &text, Some(gt))?;
                } else {
                    let fact = facts[&ids[i]].choose(&mut rng).unwrap().clone();
                    let gt = ground_truth(&label, &fact, &mut rng);
                    let text = render_query(&label, &fact, &mut rng);
                    inject_query(&mut transcripts[i], &point, &text, Some(gt));
                }
            }
        }
    }
    Ok(SyntheticCorpus {
        transcripts,
        splits,
        facts,
    })
}

fn ground_truth<R: Rng + ?Sized>(label: &ComplexityLabel, fact: &Fact, rng: &mut R) -> String {
    if label.te == Te::High {
        render_action_items(fact, rng)
    } else {
        fact.sentence.clone()
    }
}

/// Speakers that appear in more than one meeting.
pub fn recurring_speakers(corpus: &[Transcript]) -> BTreeSet<String> {
    let mut seen = BTreeMap::<&str, usize>::new();
    for t in corpus {
        for s in &t.speakers {
            *seen.entry(s).or_default() += 1;
        }
    }
    seen.into_iter()
        .filter(|(_, c)| *c > 1)
        .map(|(s, _)| s.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{class_distribution, verify_splits};

    #[test]
    fn default_corpus_matches_dataset_shape() {
        let mapping = ClassMapping::default_mapping();
        let c = generate_corpus(&SynthConfig::default(), &mapping).unwrap();
        assert_eq!(c.transcripts.len(), 231);
        let injected: usize = c.transcripts.iter().map(|t| t.injected_turns().count()).sum();
        assert_eq!(injected, 1180);
        let mean = injected as f64 / 231.0;
        assert!((mean - 5.11).abs() < 0.005, "{mean}");
        for t in &c.transcripts {
            t.validate().unwrap();
        }
        assert!(verify_splits(&c.transcripts, &c.splits).is_clean());
        // Speakers recur across meetings, but only within one split.
        assert!(!recurring_speakers(&c.transcripts).is_empty());
    }

    #[test]
    fn measured_distribution_tracks_generator_weights() {
        let mapping = ClassMapping::default_mapping();
        let cfg = SynthConfig::default();
        let c = generate_corpus(&cfg, &mapping).unwrap();
        let measured = class_distribution(&c.transcripts).unwrap();
        for band in Band::ALL {
            assert!((measured.get(band) - cfg.dist.get(band)).abs() <= 0.02, "{band:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mapping = ClassMapping::default_mapping();
        let cfg = SynthConfig {
            meetings: 12,
            injected_turns: 60,
            ..SynthConfig::default()
        };
        let a = generate_corpus(&cfg, &mapping).unwrap();
        let b = generate_corpus(&cfg, &mapping).unwrap();
        assert_eq!(a.transcripts, b.transcripts);
        assert_eq!(a.splits, b.splits);
    }

    #[test]
    fn quotas_sum_to_n() {
        let d = ClassDistribution::enterprise_default();
        for n in [7, 100, 1180] {
            let q = band_quotas(&d, n);
            assert_eq!(q.iter().sum::<usize>(), n);
            for b in Band::ALL {
                assert!((q[b.index()] as f64 - d.get(b) * n as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn queries_carry_axis_cues() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fact = random_fact(&mut rng);
        let label = ComplexityLabel::new(Cl::High, Cd::CrossMeeting, Dk::Expert, Te::High);
        let q = render_query(&label, &fact, &mut rng);
        assert!(q.contains(&fact.entity));
        assert!(q.ends_with('?'));
        let items = render_action_items(&fact, &mut rng);
        assert!(items.lines().all(|l| l.starts_with("- ")));
        assert!(items.contains("owner:"));
    }
}
