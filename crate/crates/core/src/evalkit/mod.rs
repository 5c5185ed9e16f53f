//! Scoring and statistics downstream of the judge: five-dimension
//! aggregation, isotonic calibration, correlation and agreement statistics,
//! ROUGE-L, distribution tests, weight sweeps and Pareto frontiers.

mod calibration;
mod metrics;
mod stats;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{apply_map, pava_fit, IsotonicMap};
pub use metrics::{
    lcs_len, pareto_frontier, rouge_l, rouge_l_text, te_metrics, weight_sensitivity, ParetoPoint,
    RougeL, SweepReport, TeMetrics, TeRecord,
};
pub use stats::{
    bca_interval, chi_square_gof, cohens_kappa, correlations, fisher_z_p, fleiss_kappa,
    js_divergence, kendall_tau_b, mean_pairwise_kappa, nearest_rank, pearson, permutation_p,
    rank_average, spearman, CorrelationReport, Interval, KappaWeighting,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("expected agreement is 1; kappa undefined")]
    DegenerateAgreement,
    #[error("reference is empty")]
    EmptyReference,
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("no task-execution traces")]
    EmptyTE,
    #[error("score {value} for {dimension} outside [1, 10]")]
    OutOfRange { dimension: &'static str, value: f64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const DIMENSIONS: [&str; 5] = ["factual", "user_need", "conciseness", "structure", "completeness"];
pub const EQUAL_WEIGHTS: [f64; 5] = [0.2; 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub factual: f64,
    pub user_need: f64,
    pub conciseness: f64,
    pub structure: f64,
    pub completeness: f64,
}

impl DimensionScores {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            factual: a[0],
            user_need: a[1],
            conciseness: a[2],
            structure: a[3],
            completeness: a[4],
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.factual, self.user_need, self.conciseness, self.structure, self.completeness]
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (dimension, value) in DIMENSIONS.iter().zip(self.to_array()) {
            if !(1.0..=10.0).contains(&value) {
                return Err(EvalError::OutOfRange { dimension, value });
            }
        }
        Ok(())
    }
}

fn check_weights(w: &[f64; 5]) -> Result<(), EvalError> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(EvalError::BadWeights(format!("{w:?} has a negative or non-finite entry")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(EvalError::BadWeights(format!("{w:?} sums to {sum}")));
    }
    Ok(())
}

/// Weighted mean of the five dimensions.
pub fn aggregate(scores: &DimensionScores, weights: &[f64; 5]) -> Result<f64, EvalError> {
    check_weights(weights)?;
    Ok(scores.to_array().iter().zip(weights).map(|(s, w)| s * w).sum())
}

/// One judged response. JSONL form `{query_id, model, dims, human_overall?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub query_id: String,
    pub model: String,
    pub dims: DimensionScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_overall: Option<f64>,
}

pub fn parse_scores(bytes: &[u8]) -> Result<Vec<ScoreRecord>, EvalError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EvalError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.dims.validate().map_err(|e| EvalError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn emit_scores(records: &[ScoreRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("score serializes") + "\n")
        .collect()
}

/// Per-model dimension means, models in name order.
pub fn model_means(records: &[ScoreRecord]) -> Vec<(String, [f64; 5])> {
    let mut acc: std::collections::BTreeMap<&str, ([f64; 5], usize)> = Default::default();
    for r in records {
        let e = acc.entry(r.model.as_str()).or_insert(([0.0; 5], 0));
        for (s, v) in e.0.iter_mut().zip(r.dims.to_array()) {
            *s += v;
        }
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(m, (sums, n))| (m.to_string(), sums.map(|s| s / n as f64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights_constant_profile() {
        let s = DimensionScores::from_array([7.0; 5]);
        assert!((aggregate(&s, &EQUAL_WEIGHTS).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn flagship_row_raw_mean() {
        let s = DimensionScores::from_array([7.50, 6.57, 7.76, 7.33, 6.36]);
        let oracle = (7.50 + 6.57 + 7.76 + 7.33 + 6.36) / 5.0;
        let got = aggregate(&s, &EQUAL_WEIGHTS).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 7.104).abs() < 1e-9);
    }

    #[test]
    fn one_hot_weight_selects_dimension() {
        let s = DimensionScores::from_array([7.5, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(aggregate(&s, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 7.5);
    }

    #[test]
    fn bad_weights_rejected() {
        let s = DimensionScores::from_array([5.0; 5]);
        assert!(matches!(aggregate(&s, &[0.5; 5]), Err(EvalError::BadWeights(_))));
        assert!(matches!(
            aggregate(&s, &[1.2, -0.2, 0.0, 0.0, 0.0]),
            Err(EvalError::BadWeights(_))
        ));
    }

    #[test]
    fn scores_jsonl_round_trip_and_range_check() {
        let recs = vec![ScoreRecord {
            query_id: "q1".into(),
            model: "a".into(),
            dims: DimensionScores::from_array([7.0, 6.0, 5.0, 8.0, 9.0]),
            human_overall: Some(6.5),
        }];
        assert_eq!(parse_scores(emit_scores(&recs).as_bytes()).unwrap(), recs);
        let bad = r#"{"query_id":"q","model":"m","dims":{"factual":0.5,"user_need":5,"conciseness":5,"structure":5,"completeness":5}}"#;
        assert!(matches!(parse_scores(bad.as_bytes()), Err(EvalError::Parse { line: 1, .. })));
    }
}
