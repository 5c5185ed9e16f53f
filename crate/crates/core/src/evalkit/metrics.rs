//! ROUGE-L, task-execution metrics, weight sensitivity and Pareto
//! frontiers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::stats::kendall_tau_b;
use super::{EvalError, EQUAL_WEIGHTS};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<RougeL, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let lcs = lcs_len(candidate, reference) as f64;
    let precision = if candidate.is_empty() { 0.0 } else { lcs / candidate.len() as f64 };
    let recall = lcs / reference.len() as f64;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RougeL { precision, recall, f })
}

/// ROUGE-L on raw text after lower-casing and stripping punctuation.
pub fn rouge_l_text(candidate: &str, reference: &str) -> Result<RougeL, EvalError> {
    rouge_l(&tokenize(candidate), &tokenize(reference))
}

/// One task-execution query as observed in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeRecord {
    pub success: bool,
    pub tool_calls: Vec<String>,
    pub latency_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeMetrics {
    pub te_success_at_1: f64,
    /// Mean number of distinct tools called per query.
    pub mean_chain_len: f64,
    pub mean_exec_time_s: f64,
    pub n: usize,
}

/// Metrics over the records whose label marks them as task-execution.
pub fn te_metrics(records: &[TeRecord], te_labels: &[bool]) -> Result<TeMetrics, EvalError> {
    if records.len() != te_labels.len() {
        return Err(EvalError::LengthMismatch {
            left: records.len(),
            right: te_labels.len(),
        });
    }
    let te: Vec<&TeRecord> = records.iter().zip(te_labels).filter(|(_, l)| **l).map(|(r, _)| r).collect();
    if te.is_empty() {
        return Err(EvalError::EmptyTE);
    }
    let n = te.len() as f64;
    Ok(TeMetrics {
        te_success_at_1: te.iter().filter(|r| r.success).count() as f64 / n,
        mean_chain_len: te
            .iter()
            .map(|r| r.tool_calls.iter().collect::<BTreeSet<_>>().len() as f64)
            .sum::<f64>()
            / n,
        mean_exec_time_s: te.iter().map(|r| r.latency_s).sum::<f64>() / n,
        n: te.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub min_kendall_tau: f64,
    /// Weight vector at which the minimum was reached.
    pub worst_weights: [f64; 5],
    pub vectors_evaluated: usize,
}

/// Up-weights every non-empty subset of dimensions by each factor on a
/// grid over `(1, max_upweight]`, shrinking the remaining dimensions
/// proportionally so weights still sum to one, and reports the smallest
/// Kendall tau between a swept ranking and the equal-weight ranking.
/// Vectors that would need negative weights are skipped.
pub fn weight_sensitivity(
    model_dim_scores: &[[f64; 5]],
    max_upweight: f64,
    grid_steps: usize,
) -> Result<SweepReport, EvalError> {
    if model_dim_scores.len() < 2 {
        return Err(EvalError::TooShort {
            need: 2,
            got: model_dim_scores.len(),
        });
    }
    assert!(max_upweight >= 1.0 && grid_steps >= 1, "bad sweep grid");
    let score = |w: &[f64; 5]| -> Vec<f64> {
        model_dim_scores
            .iter()
            .map(|d| d.iter().zip(w).map(|(s, w)| s * w).sum())
            .collect()
    };
    let base = score(&EQUAL_WEIGHTS);
    let mut report = SweepReport {
        min_kendall_tau: 1.0,
        worst_weights: EQUAL_WEIGHTS,
        vectors_evaluated: 0,
    };
    for mask in 1u8..32 {
        let up = mask.count_ones() as usize;
        for step in 1..=grid_steps {
            let factor = 1.0 + (max_upweight - 1.0) * step as f64 / grid_steps as f64;
            let up_w = factor / 5.0;
            let rest = if up == 5 { 0.0 } else { (1.0 - up as f64 * up_w) / (5 - up) as f64 };
            if rest < 0.0 {
                continue;
            }
            let w: [f64; 5] = std::array::from_fn(|i| if mask & (1 << i) != 0 { up_w } else { rest });
            let tau = kendall_tau_b(&base, &score(&w))?;
            report.vectors_evaluated += 1;
            if tau < report.min_kendall_tau {
                report.min_kendall_tau = tau;
                report.worst_weights = w;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub quality: f64,
    pub latency_s: f64,
    pub cost_k: f64,
}

impl ParetoPoint {
    /// At least as good on every axis and strictly better on one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.quality >= other.quality
            && self.latency_s <= other.latency_s
            && self.cost_k <= other.cost_k
            && (self.quality > other.quality || self.latency_s < other.latency_s || self.cost_k < other.cost_k)
    }
}

/// Indices of non-dominated points, in input order.
///
/// Points are visited best-quality first (then lowest latency, then lowest
/// cost); no point can be dominated by one visited after it, so each point
/// only needs checking against the frontier found so far.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        q.quality
            .total_cmp(&p.quality)
            .then(p.latency_s.total_cmp(&q.latency_s))
            .then(p.cost_k.total_cmp(&q.cost_k))
    });
    let mut frontier: Vec<usize> = Vec::new();
    for i in order {
        if !frontier.iter().any(|&f| points[f].dominates(&points[i])) {
            frontier.push(i);
        }
    }
    frontier.sort_unstable();
    frontier
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn rouge_worked_example() {
        let r = rouge_l(&toks("the cat sat"), &toks("the cat lay down")).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 0.5).abs() < 1e-15);
        assert!((r.f - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn rouge_edges() {
        assert_eq!(rouge_l_text("Hello, World!", "hello world").unwrap().f, 1.0);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")).unwrap().f, 0.0);
        assert_eq!(rouge_l(&[], &toks("c d")).unwrap().f, 0.0);
        assert!(matches!(rouge_l(&toks("a"), &[]), Err(EvalError::EmptyReference)));
    }

    #[test]
    fn te_metrics_basic() {
        let recs = vec![
            TeRecord {
                success: true,
                tool_calls: vec!["kb".into(), "kb".into()],
                latency_s: 10.0,
            };
            3
        ];
        let m = te_metrics(&recs, &[true; 3]).unwrap();
        assert_eq!((m.te_success_at_1, m.mean_chain_len, m.mean_exec_time_s), (1.0, 1.0, 10.0));
        assert!(matches!(te_metrics(&recs, &[false; 3]), Err(EvalError::EmptyTE)));
    }

    #[test]
    fn uniform_profiles_never_reorder() {
        let rows = [[3.0; 5], [5.0; 5], [7.5; 5]];
        let r = weight_sensitivity(&rows, 2.0, 4).unwrap();
        assert_eq!(r.min_kendall_tau, 1.0);
        assert!(r.vectors_evaluated > 0);
    }

    #[test]
    fn identical_models_are_degenerate() {
        let rows = [[6.0, 7.0, 5.0, 6.0, 6.5]; 3];
        assert!(matches!(weight_sensitivity(&rows, 2.0, 4), Err(EvalError::DegenerateInput(_))));
    }

    #[test]
    fn swept_weights_are_convex() {
        let rows = [[7.0, 6.0, 5.0, 8.0, 4.0], [6.0, 7.0, 8.0, 4.0, 6.0], [5.0, 5.0, 5.0, 5.0, 5.0]];
        let r = weight_sensitivity(&rows, 2.0, 10).unwrap();
        assert!((r.worst_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.worst_weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn pareto_small_cases() {
        let p = |q, l, c| ParetoPoint { quality: q, latency_s: l, cost_k: c };
        assert_eq!(pareto_frontier(&[p(1.0, 1.0, 1.0)]), [0]);
        let pts = [p(5.0, 2.0, 1.0), p(4.0, 3.0, 2.0), p(6.0, 20.0, 2.0), p(5.0, 2.0, 1.0)];
        assert_eq!(pareto_frontier(&pts), [0, 2, 3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn naive_lcs(a: &[char], b: &[char]) -> usize {
            if a.is_empty() || b.is_empty() {
                return 0;
            }
            if a[0] == b[0] {
                1 + naive_lcs(&a[1..], &b[1..])
            } else {
                naive_lcs(&a[1..], b).max(naive_lcs(a, &b[1..]))
            }
        }

        proptest! {
            #[test]
            fn lcs_matches_recursive_definition(a in "[abc]{0,8}", b in "[abc]{0,8}") {
                let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
                prop_assert_eq!(lcs_len(&a, &b), naive_lcs(&a, &b));
            }

            #[test]
            fn pareto_matches_pairwise(pts in proptest::collection::vec((0u8..6, 0u8..6, 0u8..6), 1..40)) {
                let pts: Vec<ParetoPoint> = pts.iter().map(|&(q, l, c)| ParetoPoint {
                    quality: f64::from(q), latency_s: f64::from(l), cost_k: f64::from(c),
                }).collect();
                let brute: Vec<usize> = (0..pts.len())
                    .filter(|&i| !pts.iter().any(|o| o.dominates(&pts[i])))
                    .collect();
                prop_assert_eq!(pareto_frontier(&pts), brute);
            }
        }
    }
}
