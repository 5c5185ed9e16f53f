//! Two-layer fully connected network with ReLU hidden units, exact
//! backpropagation and an Adam optimizer. Shared by the routing head and
//! the tool head.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// `logits = W2ᵀ·relu(W1ᵀ·x + b1) + b2`.
///
/// `w1` is stored input-major (`w1[i * hidden + j]`), `w2` hidden-major
/// (`w2[j * outputs + k]`); this is also the on-disk order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Shape header written next to serialized weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            input,
            hidden,
            outputs,
            w1: vec![0.0; input * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * outputs],
            b2: vec![0.0; outputs],
        }
    }

    /// He-uniform first layer, Glorot-uniform output layer, zero biases.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(input, hidden, outputs);
        let a1 = (6.0 / input.max(1) as f64).sqrt();
        let a2 = (6.0 / (hidden + outputs) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        m.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        m
    }

    pub fn shape(&self) -> MlpShape {
        MlpShape {
            input: self.input,
            hidden: self.hidden,
            outputs: self.outputs,
        }
    }

    pub fn param_count(&self) -> usize {
        Self::count_for(self.input, self.hidden, self.outputs)
    }

    pub fn count_for(input: usize, hidden: usize, outputs: usize) -> usize {
        input * hidden + hidden + hidden * outputs + outputs
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input, self.hidden, self.outputs)
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.slices().into_iter().flat_map(|s| s.iter().copied())
    }

    /// Mutable reference to the `idx`-th parameter in flat order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for s in self.slices_mut() {
            if idx < s.len() {
                return &mut s[idx];
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// Hidden activations (post-ReLU) and logits.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.input);
        let h = self.hidden;
        let mut hidden = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w1[i * h..(i + 1) * h];
            for (a, w) in hidden.iter_mut().zip(row) {
                *a += xi * w;
            }
        }
        hidden.iter_mut().for_each(|a| *a = a.max(0.0));
        let o = self.outputs;
        let mut logits = self.b2.clone();
        for (j, &a) in hidden.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.w2[j * o..(j + 1) * o];
            for (z, w) in logits.iter_mut().zip(row) {
                *z += a * w;
            }
        }
        (hidden, logits)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Accumulates `scale · ∂L/∂θ` into `grad`, given `∂L/∂logits`.
    pub fn backward(&self, x: &[f64], hidden: &[f64], dlogits: &[f64], scale: f64, grad: &mut Mlp) {
        let (h, o) = (self.hidden, self.outputs);
        let mut dhidden = vec![0.0; h];
        for (j, &a) in hidden.iter().enumerate() {
            let w = &self.w2[j * o..(j + 1) * o];
            let g = &mut grad.w2[j * o..(j + 1) * o];
            let mut acc = 0.0;
            for k in 0..o {
                g[k] += scale * a * dlogits[k];
                acc += w[k] * dlogits[k];
            }
            // ReLU gate; the kink at exactly zero takes the zero subgradient.
            dhidden[j] = if a > 0.0 { acc } else { 0.0 };
        }
        for k in 0..o {
            grad.b2[k] += scale * dlogits[k];
        }
        for j in 0..h {
            grad.b1[j] += scale * dhidden[j];
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let g = &mut grad.w1[i * h..(i + 1) * h];
            for (gj, dj) in g.iter_mut().zip(&dhidden) {
                *gj += scale * xi * dj;
            }
        }
    }

    /// Flat little-endian f64 blob: W1, b1, W2, b2.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 8);
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(shape: MlpShape, bytes: &[u8]) -> Option<Self> {
        let mut m = Self::zeros(shape.input, shape.hidden, shape.outputs);
        if bytes.len() != m.param_count() * 8 {
            return None;
        }
        let mut chunks = bytes.chunks_exact(8);
        for s in m.slices_mut() {
            for p in s.iter_mut() {
                *p = f64::from_le_bytes(chunks.next()?.try_into().ok()?);
            }
        }
        Some(m)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn logsumexp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Mlp,
    v: Mlp,
}

impl Adam {
    pub fn new(like: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Mlp, grad: &Mlp) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = self.lr;
        let eps = self.eps;
        let ps = params.slices_mut();
        let gs = grad.slices();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= step * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
