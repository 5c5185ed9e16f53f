//! Isotonic calibration by pool-adjacent-violators.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Piecewise-linear monotone map from automated to human scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    pub breakpoints: Vec<f64>,
    pub fitted: Vec<f64>,
}

impl IsotonicMap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        let m: Self = serde_json::from_str(s).map_err(|e| EvalError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if m.breakpoints.len() != m.fitted.len() || m.breakpoints.is_empty() {
            return Err(EvalError::LengthMismatch {
                left: m.breakpoints.len(),
                right: m.fitted.len(),
            });
        }
        if m.breakpoints.windows(2).any(|w| w[0] >= w[1]) || m.fitted.windows(2).any(|w| w[0] > w[1]) {
            return Err(EvalError::DegenerateInput("map is not monotone".into()));
        }
        Ok(m)
    }
}

/// Least-squares non-decreasing fit of `human` on `auto`. Tied `auto`
/// values are averaged first and carry their multiplicity as weight.
pub fn pava_fit(auto: &[f64], human: &[f64]) -> Result<IsotonicMap, EvalError> {
    if auto.len() != human.len() {
        return Err(EvalError::LengthMismatch {
            left: auto.len(),
            right: human.len(),
        });
    }
    if auto.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: auto.len() });
    }
    if auto.iter().chain(human).any(|v| !v.is_finite()) {
        return Err(EvalError::DegenerateInput("non-finite score".into()));
    }
    let mut pairs: Vec<(f64, f64)> = auto.iter().copied().zip(human.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // (x, mean y, weight) per distinct x
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for (x, y) in pairs {
        match points.last_mut() {
            Some(p) if p.0 == x => {
                p.1 = (p.1 * p.2 + y) / (p.2 + 1.0);
                p.2 += 1.0;
            }
            _ => points.push((x, y, 1.0)),
        }
    }

    // blocks: (mean, weight, count of points)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for &(_, y, w) in &points {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let b = blocks.pop().unwrap();
            let a = blocks.last_mut().unwrap();
            a.0 = (a.0 * a.1 + b.0 * b.1) / (a.1 + b.1);
            a.1 += b.1;
            a.2 += b.2;
        }
    }
    let fitted = blocks
        .iter()
        .flat_map(|&(m, _, c)| std::iter::repeat_n(m, c))
        .collect();
    Ok(IsotonicMap {
        breakpoints: points.iter().map(|p| p.0).collect(),
        fitted,
    })
}

/// Linear interpolation between breakpoints, clamped outside the range.
pub fn apply_map(map: &IsotonicMap, x: f64) -> f64 {
    let bp = &map.breakpoints;
    let fy = &map.fitted;
    if x <= bp[0] {
        return fy[0];
    }
    if x >= bp[bp.len() - 1] {
        return fy[fy.len() - 1];
    }
    let hi = bp.partition_point(|b| *b <= x);
    let lo = hi - 1;
    if bp[lo] == x {
        return fy[lo];
    }
    let t = (x - bp[lo]) / (bp[hi] - bp[lo]);
    fy[lo] + t * (fy[hi] - fy[lo])
}
