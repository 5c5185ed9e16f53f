//! Routing head: hashed n-gram features, a two-layer network over the four
//! routing actions, focal-loss training.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Transcript;
use crate::nn::{argmax, softmax, Adam, Mlp, MlpShape};
use crate::taxonomy::{route_label, RoutingAction};
use crate::text::{stable_hash, tokenize};

pub const DEFAULT_DIM: usize = 576;
pub const HIDDEN: usize = 512;
pub const N_ROUTES: usize = 4;

/// Weight on context-digest n-grams relative to query n-grams.
const CONTEXT_WEIGHT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("corpus has no injected turns")]
    EmptyCorpus,
    #[error("injected turn at {start_s}s in {meeting_id} has no complexity label")]
    MissingLabel { meeting_id: String, start_s: f64 },
    #[error("invalid focal config: {0}")]
    BadFocalConfig(String),
    #[error("weights file does not match its sidecar: {0}")]
    CorruptWeights(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub norm: f64,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self { values, norm }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        self.dot(other) / (self.norm * other.norm)
    }

    /// `self ++ extra`, used for the tool head's evidence-augmented input.
    pub fn concat(&self, extra: &[f64]) -> FeatureVector {
        let mut v = self.values.clone();
        v.extend_from_slice(extra);
        FeatureVector::new(v)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Anything that turns a query and a digest of its context into a fixed
/// length vector. A real embedding client can implement this.
pub trait FeatureExtractor {
    fn dim(&self) -> usize;
    fn extract(&self, query: &str, context_digest: &str) -> FeatureVector;
}

/// Signed feature hashing of token unigrams and bigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedNgrams {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashedNgrams {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

impl HashedNgrams {
    fn add(&self, values: &mut [f64], prefix: &str, text: &str, weight: f64) {
        let toks = tokenize(text);
        let mut bump = |gram: &str| {
            let h = stable_hash(self.seed, format!("{prefix}{gram}").as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            values[idx] += sign * weight;
        };
        for t in &toks {
            bump(t);
        }
        for pair in toks.windows(2) {
            bump(&format!("{} {}", pair[0], pair[1]));
        }
    }
}

impl FeatureExtractor for HashedNgrams {
    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, query: &str, context_digest: &str) -> FeatureVector {
        let mut values = vec![0.0; self.dim];
        self.add(&mut values, "q:", query, 1.0);
        self.add(&mut values, "c:", context_digest, CONTEXT_WEIGHT);
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        FeatureVector::new(values)
    }
}

pub fn extract_features(query: &str, context_digest: &str, dim: usize, seed: u64) -> FeatureVector {
    assert!(dim > 0, "feature dimension must be positive");
    HashedNgrams { dim, seed }.extract(query, context_digest)
}

/// The last `max_words` words spoken (non-injected turns) before `at_s`.
pub fn context_digest(transcript: &Transcript, at_s: f64, max_words: usize) -> String {
    let mut words: Vec<&str> = transcript
        .turns
        .iter()
        .filter(|t| !t.injected && t.start_s < at_s)
        .flat_map(|t| t.text.split_whitespace())
        .collect();
    let skip = words.len().saturating_sub(max_words);
    words.drain(..skip);
    words.join(" ")
}

/// Routing head parameters: `dim → 512 → 4`.
pub type RouterWeights = Mlp;

pub fn init_router<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> RouterWeights {
    Mlp::init(dim, HIDDEN, N_ROUTES, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterDecision {
    pub action: RoutingAction,
    /// Largest softmax probability.
    pub confidence: f64,
    pub logits: [f64; N_ROUTES],
}

fn check_dim(weights: &Mlp, x: &FeatureVector) -> Result<(), RouterError> {
    if x.dim() != weights.input {
        return Err(RouterError::DimMismatch {
            expected: weights.input,
            got: x.dim(),
        });
    }
    Ok(())
}

pub fn forward(weights: &RouterWeights, features: &FeatureVector) -> Result<RouterDecision, RouterError> {
    check_dim(weights, features)?;
    if weights.outputs != N_ROUTES {
        return Err(RouterError::DimMismatch {
            expected: N_ROUTES,
            got: weights.outputs,
        });
    }
    let z = weights.logits(&features.values);
    let p = softmax(&z);
    let best = argmax(&z);
    Ok(RouterDecision {
        action: RoutingAction::from_index(best).expect("four outputs"),
        confidence: p[best],
        logits: [z[0], z[1], z[2], z[3]],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub gamma: f64,
    pub class_weights: Vec<f64>,
}

impl FocalConfig {
    pub fn uniform(classes: usize, gamma: f64) -> Self {
        Self {
            gamma,
            class_weights: vec![1.0; classes],
        }
    }

    /// Weights `n / (classes · count_c)`; unseen classes get weight 1.
    pub fn inverse_frequency(labels: &[usize], classes: usize, gamma: f64) -> Self {
        let mut counts = vec![0usize; classes];
        for &l in labels {
            counts[l] += 1;
        }
        let n = labels.len() as f64;
        let class_weights = counts
            .iter()
            .map(|&c| if c == 0 { 1.0 } else { n / (classes as f64 * c as f64) })
            .collect();
        Self { gamma, class_weights }
    }

    pub fn validate(&self, classes: usize) -> Result<(), RouterError> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(RouterError::BadFocalConfig(format!("gamma {}", self.gamma)));
        }
        if self.class_weights.len() != classes {
            return Err(RouterError::BadFocalConfig(format!(
                "{} class weights for {classes} classes",
                self.class_weights.len()
            )));
        }
        if let Some(w) = self.class_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(RouterError::BadFocalConfig(format!("class weight {w}")));
        }
        Ok(())
    }
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self::uniform(N_ROUTES, 2.0)
    }
}

const P_FLOOR: f64 = 1e-12;

/// Focal loss of one sample; adds `scale · ∂loss/∂θ` to `grad`.
fn focal_accumulate(w: &Mlp, x: &[f64], label: usize, cfg: &FocalConfig, scale: f64, grad: &mut Mlp) -> f64 {
    let (hidden, z) = w.forward(x);
    let p = softmax(&z);
    let py = p[label].max(P_FLOOR);
    let q = 1.0 - p[label];
    let g = cfg.gamma;
    let weight = cfg.class_weights[label];
    let loss = -weight * q.powf(g) * py.ln();
    // d loss / d z_k = c · (p_k − [k = label]) with
    // c = w · ((1−p)^γ − γ (1−p)^(γ−1) p log p).
    let focal_term = if g == 0.0 || q <= 0.0 { 0.0 } else { g * q.powf(g - 1.0) * p[label] * py.ln() };
    let c = weight * (q.powf(g) - focal_term);
    let dz: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(k, pk)| c * (pk - if k == label { 1.0 } else { 0.0 }))
        .collect();
    w.backward(x, &hidden, &dz, scale, grad);
    loss
}

pub fn focal_loss_and_grad(
    weights: &Mlp,
    features: &FeatureVector,
    label: usize,
    cfg: &FocalConfig,
) -> Result<(f64, Mlp), RouterError> {
    check_dim(weights, features)?;
    cfg.validate(weights.outputs)?;
    assert!(label < weights.outputs, "label out of range");
    let mut grad = weights.zeros_like();
    let loss = focal_accumulate(weights, &features.values, label, cfg, 1.0, &mut grad);
    Ok((loss, grad))
}

/// Focal loss only, for evaluation and finite differences.
pub fn focal_loss(weights: &Mlp, features: &FeatureVector, label: usize, cfg: &FocalConfig) -> f64 {
    sample_loss(&weights.logits(&features.values), label, cfg)
}

fn sample_loss(logits: &[f64], label: usize, cfg: &FocalConfig) -> f64 {
    let p = softmax(logits);
    let py = p[label].max(P_FLOOR);
    -cfg.class_weights[label] * (1.0 - p[label]).powf(cfg.gamma) * py.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: usize,
    /// Fraction of samples withheld for held-out accuracy.
    pub heldout_frac: f64,
    pub focal: FocalConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch: 64,
            lr: 1e-3,
            hidden: HIDDEN,
            heldout_frac: 0.2,
            focal: FocalConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub weights: Mlp,
    pub train_accuracy: f64,
    /// `None` when the dataset was too small to hold anything out.
    pub heldout_accuracy: Option<f64>,
    /// Mean training loss before training and after every epoch.
    pub epoch_losses: Vec<f64>,
    pub train_idx: Vec<usize>,
    pub heldout_idx: Vec<usize>,
}

fn mean_loss(w: &Mlp, data: &[(&[f64], usize)], cfg: &FocalConfig) -> f64 {
    let total: f64 = data.iter().map(|(x, y)| sample_loss(&w.logits(x), *y, cfg)).sum();
    total / data.len() as f64
}

/// Fraction of `(x, y)` pairs whose argmax matches.
pub fn accuracy(w: &Mlp, data: &[(&[f64], usize)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data.iter().filter(|(x, y)| argmax(&w.logits(x)) == *y).count();
    hits as f64 / data.len() as f64
}

/// Mini-batch Adam on the focal loss for any classifier head.
pub fn fit_classifier(data: &[(&[f64], usize)], outputs: usize, cfg: &TrainConfig) -> Result<TrainedHead, RouterError> {
    if data.is_empty() {
        return Err(RouterError::EmptyDataset);
    }
    cfg.focal.validate(outputs)?;
    let input = data[0].0.len();
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != input) {
        return Err(RouterError::DimMismatch {
            expected: input,
            got: x.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_held = if data.len() >= 10 {
        (data.len() as f64 * cfg.heldout_frac).floor() as usize
    } else {
        0
    };
    let heldout_idx = order[..n_held].to_vec();
    let mut train_idx = order[n_held..].to_vec();
    let train: Vec<(&[f64], usize)> = train_idx.iter().map(|&i| data[i]).collect();
    let held: Vec<(&[f64], usize)> = heldout_idx.iter().map(|&i| data[i]).collect();

    let mut w = Mlp::init(input, cfg.hidden, outputs, &mut rng);
    let mut adam = Adam::new(&w, cfg.lr);
    let mut epoch_losses = vec![mean_loss(&w, &train, &cfg.focal)];
    let batch = cfg.batch.max(1);
    let mut positions: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        positions.shuffle(&mut rng);
        for chunk in positions.chunks(batch) {
            let mut grad = w.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (x, y) = train[i];
                focal_accumulate(&w, x, y, &cfg.focal, scale, &mut grad);
            }
            adam.step(&mut w, &grad);
        }
        epoch_losses.push(mean_loss(&w, &train, &cfg.focal));
    }
    train_idx.sort_unstable();
    Ok(TrainedHead {
        train_accuracy: accuracy(&w, &train),
        heldout_accuracy: (!held.is_empty()).then(|| accuracy(&w, &held)),
        weights: w,
        epoch_losses,
        train_idx,
        heldout_idx,
    })
}

pub fn train_supervised(
    dataset: &[(FeatureVector, RoutingAction)],
    cfg: &TrainConfig,
) -> Result<TrainedHead, RouterError> {
    let data: Vec<(&[f64], usize)> = dataset
        .iter()
        .map(|(x, y)| (x.values.as_slice(), y.index()))
        .collect();
    fit_classifier(&data, N_ROUTES, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub meeting_id: String,
    pub start_s: f64,
    pub query: String,
    pub features: FeatureVector,
    pub action: RoutingAction,
}

/// One example per injected turn, labeled by the route its complexity
/// implies.
pub fn derive_labels(
    corpus: &[Transcript],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<LabeledExample>, RouterError> {
    let mut out = Vec::new();
    for t in corpus {
        for turn in t.injected_turns() {
            let label = turn.complexity.ok_or_else(|| RouterError::MissingLabel {
                meeting_id: t.meeting_id.clone(),
                start_s: turn.start_s,
            })?;
            let digest = context_digest(t, turn.start_s, 40);
            out.push(LabeledExample {
                meeting_id: t.meeting_id.clone(),
                start_s: turn.start_s,
                query: turn.text.clone(),
                features: extractor.extract(&turn.text, &digest),
                action: route_label(&label),
            });
        }
    }
    if out.is_empty() {
        return Err(RouterError::EmptyCorpus);
    }
    Ok(out)
}

/// Sidecar written next to a weights blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub dim: usize,
    pub hidden: usize,
    pub actions: usize,
    pub seed: u64,
}

fn sidecar_path(blob: &Path) -> PathBuf {
    blob.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RouterError + '_ {
    move |source| RouterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `blob` (raw f64 LE) and `blob` with a `.json` extension.
pub fn save_weights(weights: &Mlp, seed: u64, blob: &Path) -> Result<(), RouterError> {
    let side = WeightsSidecar {
        dim: weights.input,
        hidden: weights.hidden,
        actions: weights.outputs,
        seed,
    };
    fs::write(blob, weights.to_le_bytes()).map_err(io_err(blob))?;
    let sp = sidecar_path(blob);
    fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n").map_err(io_err(&sp))?;
    Ok(())
}

pub fn load_weights(blob: &Path) -> Result<(Mlp, WeightsSidecar), RouterError> {
    let sp = sidecar_path(blob);
    let side: WeightsSidecar = serde_json::from_str(&fs::read_to_string(&sp).map_err(io_err(&sp))?)?;
    let bytes = fs::read(blob).map_err(io_err(blob))?;
    let shape = MlpShape {
        input: side.dim,
        hidden: side.hidden,
        outputs: side.actions,
    };
    let w = Mlp::from_le_bytes(shape, &bytes).ok_or_else(|| {
        RouterError::CorruptWeights(format!("{} bytes for shape {shape:?}", bytes.len()))
    })?;
    if !w.is_finite() {
        return Err(RouterError::CorruptWeights("non-finite parameter".into()));
    }
    Ok((w, side))
}

/// Gaussian clusters around random unit prototypes, one per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub n: usize,
    pub dim: usize,
    pub class_weights: [f64; N_ROUTES],
    /// Expected Euclidean norm of the per-sample noise.
    pub noise_norm: f64,
    /// Relabel every point by its best-matching prototype, which makes the
    /// set linearly separable.
    pub relabel: bool,
    pub seed: u64,
}

impl PrototypeSet {
    pub fn separable(n: usize, dim: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            class_weights: [0.25; N_ROUTES],
            noise_norm: 0.8,
            relabel: true,
            seed,
        }
    }

    pub fn generate(&self) -> Vec<(FeatureVector, RoutingAction)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let protos: Vec<Vec<f64>> = (0..N_ROUTES)
            .map(|_| {
                let v: Vec<f64> = (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let total: f64 = self.class_weights.iter().sum();
        let sigma = self.noise_norm / (self.dim as f64).sqrt();
        (0..self.n)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                let mut class = N_ROUTES - 1;
                for (c, w) in self.class_weights.iter().enumerate() {
                    if u < *w {
                        class = c;
                        break;
                    }
                    u -= w;
                }
                let x: Vec<f64> = protos[class]
                    .iter()
                    .map(|p| p + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                if self.relabel {
                    let scores: Vec<f64> = protos
                        .iter()
                        .map(|p| p.iter().zip(&x).map(|(a, b)| a * b).sum())
                        .collect();
                    class = argmax(&scores);
                }
                (FeatureVector::new(x), RoutingAction::from_index(class).unwrap())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate_corpus, SynthConfig};
    use crate::taxonomy::ClassMapping;

    #[test]
    fn empty_query_is_zero_vector() {
        let f = extract_features("", "", 64, 1);
        assert!(f.values.iter().all(|v| *v == 0.0));
        assert_eq!(f.norm, 0.0);
    }

    #[test]
    fn features_are_deterministic_and_normalized() {
        let a = extract_features("what is the budget of aurora", "we agreed on june", 576, 9);
        let b = extract_features("what is the budget of aurora", "we agreed on june", 576, 9);
        assert_eq!(a, b);
        assert!((a.norm - 1.0).abs() < 1e-12);
        let c = extract_features("what is the budget of aurora", "we agreed on june", 576, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn one_token_change_changes_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vocab: Vec<String> = (0..500).map(|i| format!("w{i}")).collect();
        let mut differ = 0;
        let pairs = 10_000;
        for _ in 0..pairs {
            let len = rng.random_range(3..12);
            let mut toks: Vec<&str> = (0..len).map(|_| vocab[rng.random_range(0..500)].as_str()).collect();
            let a = toks.join(" ");
            let pos = rng.random_range(0..len);
            let old = toks[pos];
            let mut replacement = old;
            while replacement == old {
                replacement = vocab[rng.random_range(0..500)].as_str();
            }
            toks[pos] = replacement;
            let b = toks.join(" ");
            if extract_features(&a, "", 576, 0) != extract_features(&b, "", 576, 0) {
                differ += 1;
            }
        }
        assert!(differ as f64 / pairs as f64 >= 0.999, "{differ}");
    }

    #[test]
    fn zero_weights_give_uniform_fast() {
        let w = Mlp::zeros(8, 4, N_ROUTES);
        let d = forward(&w, &FeatureVector::new(vec![0.3; 8])).unwrap();
        assert_eq!(d.action, RoutingAction::Fast);
        assert!((d.confidence - 0.25).abs() < 1e-15);
    }

    #[test]
    fn isolated_logit_wins_confidently() {
        let mut w = Mlp::zeros(8, 4, N_ROUTES);
        w.b2[2] = 10.0;
        let d = forward(&w, &FeatureVector::new(vec![1.0; 8])).unwrap();
        assert_eq!(d.action, RoutingAction::SlowRag);
        // e^10 / (e^10 + 3) is just under 0.9999.
        let expect = 1.0 / (1.0 + 3.0 * (-10f64).exp());
        assert!((d.confidence - expect).abs() < 1e-12);
        w.b2 = vec![-10.0, -10.0, 10.0, -10.0];
        let d = forward(&w, &FeatureVector::new(vec![1.0; 8])).unwrap();
        assert_eq!(d.action, RoutingAction::SlowRag);
        assert!(d.confidence >= 0.9999);
    }

    #[test]
    fn dim_mismatch_rejected() {
        let w = Mlp::zeros(8, 4, N_ROUTES);
        assert!(matches!(
            forward(&w, &FeatureVector::zeros(9)),
            Err(RouterError::DimMismatch { expected: 8, got: 9 })
        ));
    }

    #[test]
    fn parameter_count_at_default_dim() {
        assert_eq!(Mlp::count_for(DEFAULT_DIM, HIDDEN, N_ROUTES), 297_476);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(init_router(DEFAULT_DIM, &mut rng).param_count(), 297_476);
    }

    fn small_problem(seed: u64) -> (Mlp, FeatureVector, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Mlp::init(7, 9, N_ROUTES, &mut rng);
        let x = FeatureVector::new((0..7).map(|_| rng.random_range(-1.0..1.0)).collect());
        (w, x, rng.random_range(0..N_ROUTES))
    }

    #[test]
    fn gamma_zero_is_cross_entropy() {
        let (w, x, y) = small_problem(3);
        let cfg = FocalConfig::uniform(N_ROUTES, 0.0);
        let (loss, _) = focal_loss_and_grad(&w, &x, y, &cfg).unwrap();
        let p = softmax(&w.logits(&x.values));
        assert!((loss + p[y].ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_small_loss() {
        let mut w = Mlp::zeros(3, 2, N_ROUTES);
        w.b2[1] = 40.0;
        let (loss, _) = focal_loss_and_grad(&w, &FeatureVector::zeros(3), 1, &FocalConfig::default()).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (w, x, y) = small_problem(seed);
            let mut cfg = FocalConfig::uniform(N_ROUTES, 2.0);
            cfg.class_weights = vec![1.0, 2.0, 0.5, 1.5];
            let (_, g) = focal_loss_and_grad(&w, &x, y, &cfg).unwrap();
            let analytic: Vec<f64> = g.params().collect();
            let h = 1e-5;
            for idx in 0..w.param_count() {
                let mut plus = w.clone();
                *plus.param_mut(idx) += h;
                let mut minus = w.clone();
                *minus.param_mut(idx) -= h;
                let fd = (focal_loss(&plus, &x, y, &cfg) - focal_loss(&minus, &x, y, &cfg)) / (2.0 * h);
                let a = analytic[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-5, "seed {seed} param {idx}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let data = vec![(extract_features("what is the budget", "", 64, 0), RoutingAction::SlowCross)];
        let cfg = TrainConfig {
            hidden: 32,
            ..TrainConfig::default()
        };
        let t = train_supervised(&data, &cfg).unwrap();
        assert_eq!(t.train_accuracy, 1.0);
        assert!(t.heldout_accuracy.is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let data = PrototypeSet::separable(200, 16, 1).generate();
        let cfg = TrainConfig {
            hidden: 16,
            epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train_supervised(&data, &cfg).unwrap();
        let b = train_supervised(&data, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            train_supervised(&[], &TrainConfig::default()),
            Err(RouterError::EmptyDataset)
        ));
    }

    #[test]
    fn derived_labels_follow_route_label() {
        let cfg = SynthConfig {
            meetings: 12,
            injected_turns: 60,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg, &ClassMapping::default_mapping()).unwrap();
        let ex = derive_labels(&corpus.transcripts, &HashedNgrams::default()).unwrap();
        assert_eq!(ex.len(), 60);
        let mut expect = [0usize; 4];
        let mut got = [0usize; 4];
        for t in &corpus.transcripts {
            for turn in t.injected_turns() {
                expect[route_label(&turn.complexity.unwrap()).index()] += 1;
            }
        }
        for e in &ex {
            got[e.action.index()] += 1;
        }
        assert_eq!(expect, got);
    }

    #[test]
    fn derive_labels_needs_injections() {
        let t = Transcript::new("m", Default::default(), vec![], 10.0).unwrap();
        assert!(matches!(
            derive_labels(&[t], &HashedNgrams::default()),
            Err(RouterError::EmptyCorpus)
        ));
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = Mlp::init(10, 6, N_ROUTES, &mut rng);
        let path = dir.path().join("router.bin");
        save_weights(&w, 8, &path).unwrap();
        let (back, side) = load_weights(&path).unwrap();
        assert_eq!(back, w);
        assert_eq!(side, WeightsSidecar { dim: 10, hidden: 6, actions: 4, seed: 8 });
        fs::write(&path, [0u8; 16]).unwrap();
        assert!(matches!(load_weights(&path), Err(RouterError::CorruptWeights(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn softmax_is_permutation_equivariant(z in proptest::collection::vec(-30.0f64..30.0, 4), rot in 0usize..4) {
                let p = softmax(&z);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let mut zr = z.clone();
                zr.rotate_left(rot);
                let mut pr = p.clone();
                pr.rotate_left(rot);
                let q = softmax(&zr);
                for (a, b) in q.iter().zip(&pr) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn bias_shift_keeps_action(seed in 0u64..1000, shift in -50.0f64..50.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut w = Mlp::init(6, 5, N_ROUTES, &mut rng);
                let x = FeatureVector::new((0..6).map(|_| rng.random_range(-1.0..1.0)).collect());
                let before = forward(&w, &x).unwrap();
                w.b2.iter_mut().for_each(|b| *b += shift);
                let after = forward(&w, &x).unwrap();
                prop_assert_eq!(before.action, after.action);
                prop_assert!((before.confidence - after.confidence).abs() < 1e-9);
            }
        }
    }
}
