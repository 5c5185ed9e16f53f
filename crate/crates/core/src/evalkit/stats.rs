//! Correlation, agreement and distribution statistics.

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::EvalError;

fn check_pair(xs: &[f64], ys: &[f64], need: usize) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < need {
        return Err(EvalError::TooShort { need, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(EvalError::DegenerateInput("non-finite value".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys, 2)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateInput("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn rank_average(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys, 2)?;
    pearson(&rank_average(xs), &rank_average(ys))
}

/// Kendall's tau-b (tie-corrected).
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys, 2)?;
    let n = xs.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].total_cmp(&xs[j]) as i64;
            let dy = ys[i].total_cmp(&ys[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + tie_x) as f64;
    let n2 = (concordant + discordant + tie_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return Err(EvalError::DegenerateInput("constant input".into()));
    }
    Ok(((concordant - discordant) as f64 / (n1 * n2).sqrt()).clamp(-1.0, 1.0))
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided p-value for Pearson `r` on `n` pairs via Fisher's z.
pub fn fisher_z_p(r: f64, n: usize) -> f64 {
    if n <= 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let z = r.atanh() * ((n - 3) as f64).sqrt();
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

/// Two-sided permutation p-value of `stat`, permuting `ys`. Enumerates all
/// `n!` orderings when that is no more than `n_perm`; otherwise draws
/// `n_perm` seeded shuffles and returns `(b + 1) / (n_perm + 1)`.
pub fn permutation_p<F>(xs: &[f64], ys: &[f64], stat: F, n_perm: usize, seed: u64) -> Result<f64, EvalError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, EvalError>,
{
    check_pair(xs, ys, 2)?;
    let observed = stat(xs, ys)?.abs();
    let n = xs.len();
    let extreme = |v: f64| v.abs() >= observed - 1e-12;
    let factorial = (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k));
    let mut buf = vec![0.0; n];
    if let Some(total) = factorial.filter(|t| *t <= n_perm) {
        let mut hits = 0usize;
        for perm in (0..n).permutations(n) {
            for (b, &i) in buf.iter_mut().zip(&perm) {
                *b = ys[i];
            }
            if extreme(stat(xs, &buf)?) {
                hits += 1;
            }
        }
        return Ok(hits as f64 / total as f64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    buf.copy_from_slice(ys);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        buf.shuffle(&mut rng);
        if extreme(stat(xs, &buf)?) {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (n_perm + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Nearest-rank quantile of sorted values: the `⌈q·n⌉`-th order statistic.
fn order_stat(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = (q * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Nearest-rank percentile (`p` in percent) of unsorted values.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    order_stat(&v, p / 100.0)
}

/// Bias-corrected and accelerated bootstrap interval for a paired
/// statistic. All `n^n` resamples are enumerated when that count fits in
/// `n_boot`. Resamples on which the statistic is undefined are dropped. If
/// every replicate lies on one side of the estimate the bias correction is
/// unbounded and the plain percentile interval is returned.
pub fn bca_interval<F>(
    xs: &[f64],
    ys: &[f64],
    stat: F,
    n_boot: usize,
    alpha: f64,
    seed: u64,
) -> Result<Interval, EvalError>
where
    F: Fn(&[f64], &[f64]) -> Result<f64, EvalError>,
{
    check_pair(xs, ys, 3)?;
    let n = xs.len();
    let theta = stat(xs, ys)?;
    let mut reps = Vec::new();
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    let mut eval = |idx: &[usize], reps: &mut Vec<f64>| {
        for (k, &i) in idx.iter().enumerate() {
            bx[k] = xs[i];
            by[k] = ys[i];
        }
        if let Ok(v) = stat(&bx, &by) {
            reps.push(v);
        }
    };
    let exhaustive = u32::try_from(n)
        .ok()
        .and_then(|e| n.checked_pow(e))
        .is_some_and(|total| total <= n_boot);
    if exhaustive {
        for idx in (0..n).map(|_| 0..n).multi_cartesian_product() {
            eval(&idx, &mut reps);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = vec![0usize; n];
        for _ in 0..n_boot {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            eval(&idx, &mut reps);
        }
    }
    if reps.is_empty() {
        return Err(EvalError::DegenerateInput("no defined bootstrap replicate".into()));
    }
    reps.sort_by(f64::total_cmp);
    let b = reps.len() as f64;
    let below = reps.iter().filter(|r| **r < theta).count() as f64 / b;
    let (q_lo, q_hi) = (alpha / 2.0, 1.0 - alpha / 2.0);
    if below <= 0.0 || below >= 1.0 {
        return Ok(Interval {
            lo: order_stat(&reps, q_lo),
            hi: order_stat(&reps, q_hi),
        });
    }
    let norm = std_normal();
    let z0 = norm.inverse_cdf(below);

    let mut jack = Vec::with_capacity(n);
    let (mut jx, mut jy) = (Vec::with_capacity(n - 1), Vec::with_capacity(n - 1));
    for leave in 0..n {
        jx.clear();
        jy.clear();
        for i in (0..n).filter(|i| *i != leave) {
            jx.push(xs[i]);
            jy.push(ys[i]);
        }
        if let Ok(v) = stat(&jx, &jy) {
            jack.push(v);
        }
    }
    let accel = if jack.is_empty() {
        0.0
    } else {
        let jm = mean(&jack);
        let num: f64 = jack.iter().map(|j| (jm - j).powi(3)).sum();
        let den: f64 = jack.iter().map(|j| (jm - j).powi(2)).sum();
        if den > 0.0 {
            num / (6.0 * den.powf(1.5))
        } else {
            0.0
        }
    };
    let adjust = |q: f64| {
        let zq = norm.inverse_cdf(q);
        norm.cdf(z0 + (z0 + zq) / (1.0 - accel * (z0 + zq)))
    };
    Ok(Interval {
        lo: order_stat(&reps, adjust(q_lo)),
        hi: order_stat(&reps, adjust(q_hi)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub kendall_tau: f64,
    /// Fisher-z p-value of `pearson_r`.
    pub p_two_sided: f64,
    pub p_spearman: f64,
    pub p_kendall: f64,
    /// BCa interval for `pearson_r`.
    pub ci95: (f64, f64),
    pub n_perm: usize,
    pub n_boot: usize,
    pub seed: u64,
}

pub fn correlations(
    xs: &[f64],
    ys: &[f64],
    n_perm: usize,
    n_boot: usize,
    seed: u64,
) -> Result<CorrelationReport, EvalError> {
    check_pair(xs, ys, 3)?;
    let pearson_r = pearson(xs, ys)?;
    let ci = bca_interval(xs, ys, pearson, n_boot, 0.05, seed)?;
    Ok(CorrelationReport {
        n: xs.len(),
        pearson_r,
        spearman_rho: spearman(xs, ys)?,
        kendall_tau: kendall_tau_b(xs, ys)?,
        p_two_sided: fisher_z_p(pearson_r, xs.len()),
        p_spearman: permutation_p(xs, ys, spearman, n_perm, seed)?,
        p_kendall: permutation_p(xs, ys, kendall_tau_b, n_perm, seed.wrapping_add(1))?,
        ci95: (ci.lo.min(pearson_r), ci.hi.max(pearson_r)),
        n_perm,
        n_boot,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaWeighting {
    None,
    /// Agreement weight `1 − |i − j| / (k − 1)` over sorted categories.
    Linear,
}

pub fn cohens_kappa<T: Ord + Clone>(a: &[T], b: &[T], weighting: KappaWeighting) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::TooShort { need: 1, got: 0 });
    }
    let cats: Vec<T> = a.iter().chain(b).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let k = cats.len();
    let pos = |v: &T| cats.binary_search(v).expect("category present");
    let weight = |i: usize, j: usize| match weighting {
        KappaWeighting::None => f64::from(u8::from(i == j)),
        KappaWeighting::Linear if k > 1 => 1.0 - (i as f64 - j as f64).abs() / (k - 1) as f64,
        KappaWeighting::Linear => 1.0,
    };
    let n = a.len() as f64;
    let mut joint = vec![vec![0.0; k]; k];
    let (mut row, mut col) = (vec![0.0; k], vec![0.0; k]);
    for (x, y) in a.iter().zip(b) {
        let (i, j) = (pos(x), pos(y));
        joint[i][j] += 1.0 / n;
        row[i] += 1.0 / n;
        col[j] += 1.0 / n;
    }
    let (mut po, mut pe) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            po += weight(i, j) * joint[i][j];
            pe += weight(i, j) * row[i] * col[j];
        }
    }
    if (1.0 - pe).abs() < 1e-12 {
        return Err(EvalError::DegenerateAgreement);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Mean Cohen's kappa over all rater pairs; `raters[r]` holds rater `r`'s
/// labels for every item.
pub fn mean_pairwise_kappa<T: Ord + Clone>(raters: &[Vec<T>], weighting: KappaWeighting) -> Result<f64, EvalError> {
    if raters.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: raters.len() });
    }
    let ks: Vec<f64> = raters
        .iter()
        .tuple_combinations()
        .map(|(a, b)| cohens_kappa(a, b, weighting))
        .collect::<Result<_, _>>()?;
    Ok(mean(&ks))
}

/// Fleiss' kappa; `raters[r]` holds rater `r`'s labels for every item.
pub fn fleiss_kappa<T: Ord + Clone>(raters: &[Vec<T>]) -> Result<f64, EvalError> {
    if raters.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: raters.len() });
    }
    let items = raters[0].len();
    if let Some(r) = raters.iter().find(|r| r.len() != items) {
        return Err(EvalError::LengthMismatch {
            left: items,
            right: r.len(),
        });
    }
    if items == 0 {
        return Err(EvalError::TooShort { need: 1, got: 0 });
    }
    let cats: Vec<T> = raters.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let m = raters.len() as f64;
    let mut totals = vec![0.0; cats.len()];
    let mut p_bar = 0.0;
    for i in 0..items {
        let mut counts = vec![0.0; cats.len()];
        for r in raters {
            counts[cats.binary_search(&r[i]).expect("category present")] += 1.0;
        }
        p_bar += (counts.iter().map(|c| c * c).sum::<f64>() - m) / (m * (m - 1.0));
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
    }
    p_bar /= items as f64;
    let pe: f64 = totals.iter().map(|t| (t / (items as f64 * m)).powi(2)).sum();
    if (1.0 - pe).abs() < 1e-12 {
        return Err(EvalError::DegenerateAgreement);
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

fn check_distribution(p: &[f64], name: &str) -> Result<(), EvalError> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EvalError::BadDistribution(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadDistribution(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// Jensen-Shannon divergence in nats, within `[0, ln 2]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64, EvalError> {
    if p.len() != q.len() {
        return Err(EvalError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (2.0 * x / (x + y)).ln())
            .sum()
    };
    let js = 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
    Ok(js.clamp(0.0, std::f64::consts::LN_2))
}

/// Pearson chi-square goodness of fit with `k − 1` degrees of freedom.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<(f64, f64), EvalError> {
    if observed.len() != expected.len() {
        return Err(EvalError::LengthMismatch {
            left: observed.len(),
            right: expected.len(),
        });
    }
    if observed.len() < 2 {
        return Err(EvalError::TooShort { need: 2, got: observed.len() });
    }
    if expected.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(EvalError::BadDistribution("expected counts must be positive".into()));
    }
    if observed.iter().any(|o| !(o.is_finite() && *o >= 0.0)) {
        return Err(EvalError::BadDistribution("observed counts must be non-negative".into()));
    }
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("positive degrees of freedom");
    Ok((stat, dist.sf(stat)))
}
