//! Four-axis complexity annotation, its 13-class consolidation and the
//! deterministic label-to-route mapping used for supervised labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("invalid class mapping: {0}")]
    InvalidMapping(String),
    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),
    #[error("unknown axis level {level:?} for axis {axis}")]
    UnknownLevel { axis: &'static str, level: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Cognitive load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cl {
    Low,
    Medium,
    High,
}

/// Context dependency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cd {
    None,
    Recent,
    LongRange,
    CrossMeeting,
}

/// Domain knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dk {
    General,
    Basic,
    Expert,
}

/// Task-execution effort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Te {
    Low,
    Medium,
    High,
}

impl Cl {
    pub const ALL: [Cl; 3] = [Cl::Low, Cl::Medium, Cl::High];
}
impl Cd {
    pub const ALL: [Cd; 4] = [Cd::None, Cd::Recent, Cd::LongRange, Cd::CrossMeeting];
}
impl Dk {
    pub const ALL: [Dk; 3] = [Dk::General, Dk::Basic, Dk::Expert];
}
impl Te {
    pub const ALL: [Te; 3] = [Te::Low, Te::Medium, Te::High];
}

/// One cell of the 3×4×3×3 annotation space.
///
/// Serialized as the four-element array `[cl, cd, dk, te]` of lower-case
/// level names, e.g. `["low","none","general","low"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(Cl, Cd, Dk, Te)", into = "(Cl, Cd, Dk, Te)")]
pub struct ComplexityLabel {
    pub cl: Cl,
    pub cd: Cd,
    pub dk: Dk,
    pub te: Te,
}

impl From<(Cl, Cd, Dk, Te)> for ComplexityLabel {
    fn from((cl, cd, dk, te): (Cl, Cd, Dk, Te)) -> Self {
        Self { cl, cd, dk, te }
    }
}

impl From<ComplexityLabel> for (Cl, Cd, Dk, Te) {
    fn from(l: ComplexityLabel) -> Self {
        (l.cl, l.cd, l.dk, l.te)
    }
}

impl ComplexityLabel {
    pub const fn new(cl: Cl, cd: Cd, dk: Dk, te: Te) -> Self {
        Self { cl, cd, dk, te }
    }

    /// All 108 cells in lexicographic axis order.
    pub fn all_cells() -> Vec<ComplexityLabel> {
        let mut out = Vec::with_capacity(108);
        for cl in Cl::ALL {
            for cd in Cd::ALL {
                for dk in Dk::ALL {
                    for te in Te::ALL {
                        out.push(Self::new(cl, cd, dk, te));
                    }
                }
            }
        }
        out
    }

    /// Frequency band used by the enterprise class distribution.
    pub fn band(&self) -> Band {
        if self.cd == Cd::CrossMeeting {
            Band::Cross
        } else if self.cl == Cl::Low && self.cd == Cd::None {
            Band::Low
        } else if self.cl == Cl::High || self.cd == Cd::LongRange {
            Band::High
        } else {
            Band::Medium
        }
    }
}

impl fmt::Display for ComplexityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}/{:?}/{:?}", self.cl, self.cd, self.dk, self.te)
    }
}

/// Complexity band: the granularity at which the query mix is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    Medium,
    High,
    Cross,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Low, Band::Medium, Band::High, Band::Cross];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Discrete action space of the routing head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingAction {
    Fast,
    Slow,
    SlowRag,
    SlowCross,
}

impl RoutingAction {
    pub const ALL: [RoutingAction; 4] = [
        RoutingAction::Fast,
        RoutingAction::Slow,
        RoutingAction::SlowRag,
        RoutingAction::SlowCross,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_fast(self) -> bool {
        self == RoutingAction::Fast
    }

    /// Band implied by an action, for band-level accuracy reporting.
    pub fn band(self) -> Band {
        match self {
            RoutingAction::Fast => Band::Low,
            RoutingAction::Slow => Band::Medium,
            RoutingAction::SlowRag => Band::High,
            RoutingAction::SlowCross => Band::Cross,
        }
    }
}

/// Deterministic supervision rule. Precedence: cross-meeting context, then
/// high load or expert knowledge, then the low/no-context fast case.
pub fn route_label(label: &ComplexityLabel) -> RoutingAction {
    if label.cd == Cd::CrossMeeting {
        RoutingAction::SlowCross
    } else if label.cl == Cl::High || label.dk == Dk::Expert {
        RoutingAction::SlowRag
    } else if label.cl == Cl::Low && label.cd == Cd::None {
        RoutingAction::Fast
    } else {
        RoutingAction::Slow
    }
}

/// One consolidated class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityClass {
    pub id: u8,
    pub name: String,
    pub cells: Vec<ComplexityLabel>,
}

impl ComplexityClass {
    /// Majority band of the member cells; ties go to the lower band.
    pub fn band(&self) -> Band {
        let mut counts = [0usize; 4];
        for c in &self.cells {
            counts[c.band().index()] += 1;
        }
        let mut best = 0;
        for (i, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = i;
            }
        }
        Band::ALL[best]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MappingFile {
    classes: Vec<ComplexityClass>,
}

/// A validated partition of the 108 cells into 13 classes.
#[derive(Debug, Clone)]
pub struct ClassMapping {
    classes: Vec<ComplexityClass>,
    index: HashMap<ComplexityLabel, usize>,
}

pub const NUM_CLASSES: usize = 13;

const DEFAULT_MAPPING_JSON: &str = include_str!("../data/class_mapping.json");

impl ClassMapping {
    pub fn new(mut classes: Vec<ComplexityClass>) -> Result<Self, TaxonomyError> {
        if classes.len() != NUM_CLASSES {
            return Err(TaxonomyError::InvalidMapping(format!(
                "expected {NUM_CLASSES} classes, found {}",
                classes.len()
            )));
        }
        classes.sort_by_key(|c| c.id);
        for (i, c) in classes.iter().enumerate() {
            if usize::from(c.id) != i {
                return Err(TaxonomyError::InvalidMapping(format!(
                    "class ids must be 0..{} without gaps or duplicates (saw {})",
                    NUM_CLASSES - 1,
                    c.id
                )));
            }
            if c.cells.is_empty() {
                return Err(TaxonomyError::InvalidMapping(format!("class {} is empty", c.id)));
            }
        }
        let mut index = HashMap::with_capacity(108);
        for (i, c) in classes.iter().enumerate() {
            for cell in &c.cells {
                if let Some(prev) = index.insert(*cell, i) {
                    return Err(TaxonomyError::InvalidMapping(format!(
                        "cell {cell} assigned to classes {prev} and {i}"
                    )));
                }
            }
        }
        if let Some(missing) = ComplexityLabel::all_cells()
            .into_iter()
            .find(|c| !index.contains_key(c))
        {
            return Err(TaxonomyError::InvalidMapping(format!("cell {missing} unassigned")));
        }
        Ok(Self { classes, index })
    }

    pub fn from_json(json: &str) -> Result<Self, TaxonomyError> {
        let file: MappingFile = serde_json::from_str(json)?;
        Self::new(file.classes)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The shipped stand-in mapping: (CL band × CD band) groups with
    /// dedicated expert-knowledge and high-effort classes.
    pub fn default_mapping() -> Self {
        Self::from_json(DEFAULT_MAPPING_JSON).expect("shipped class mapping is a valid partition")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MappingFile {
            classes: self.classes.clone(),
        })
        .expect("mapping serializes")
    }

    pub fn classes(&self) -> &[ComplexityClass] {
        &self.classes
    }

    pub fn class(&self, id: u8) -> Option<&ComplexityClass> {
        self.classes.get(usize::from(id))
    }

    /// Unique class containing the label's cell.
    pub fn consolidate(&self, label: &ComplexityLabel) -> &ComplexityClass {
        // Validation guarantees every cell is present.
        &self.classes[self.index[label]]
    }

    pub fn classes_in_band(&self, band: Band) -> impl Iterator<Item = &ComplexityClass> {
        self.classes.iter().filter(move |c| c.band() == band)
    }
}

/// Probability of each complexity band in the injected query mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub weights: BTreeMap<Band, f64>,
}

impl ClassDistribution {
    pub fn new(weights: BTreeMap<Band, f64>) -> Result<Self, TaxonomyError> {
        let d = Self { weights };
        d.validate()?;
        Ok(d)
    }

    /// Enterprise query mix: low 38%, medium 29%, high 18%, cross-meeting 15%.
    pub fn enterprise_default() -> Self {
        Self {
            weights: BTreeMap::from([
                (Band::Low, 0.38),
                (Band::Medium, 0.29),
                (Band::High, 0.18),
                (Band::Cross, 0.15),
            ]),
        }
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        let mut sum = 0.0;
        for (band, &w) in &self.weights {
            if !w.is_finite() || w < 0.0 {
                return Err(TaxonomyError::InvalidDistribution(format!(
                    "weight for {band:?} is {w}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TaxonomyError::InvalidDistribution(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn get(&self, band: Band) -> f64 {
        self.weights.get(&band).copied().unwrap_or(0.0)
    }

    /// Dense vector in `Band::ALL` order.
    pub fn to_vec(&self) -> Vec<f64> {
        Band::ALL.iter().map(|b| self.get(*b)).collect()
    }

    pub fn sample_band<R: Rng + ?Sized>(&self, rng: &mut R) -> Band {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (&band, &w) in &self.weights {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(band);
            if u < acc {
                return band;
            }
        }
        // Rounding slack when u lands in [acc, 1).
        last.expect("validated distribution has positive mass")
    }
}

/// Draws a band by weight, then a class uniformly among that band's classes.
pub fn sample_class<'m, R: Rng + ?Sized>(
    dist: &ClassDistribution,
    mapping: &'m ClassMapping,
    rng: &mut R,
) -> Result<&'m ComplexityClass, TaxonomyError> {
    let band = dist.sample_band(rng);
    let members: Vec<&ComplexityClass> = mapping.classes_in_band(band).collect();
    if members.is_empty() {
        return Err(TaxonomyError::InvalidDistribution(format!(
            "band {band:?} has weight but no class in the mapping"
        )));
    }
    Ok(members[rng.random_range(0..members.len())])
}

/// Uniform cell within a class.
pub fn sample_label<R: Rng + ?Sized>(class: &ComplexityClass, rng: &mut R) -> ComplexityLabel {
    class.cells[rng.random_range(0..class.cells.len())]
}
