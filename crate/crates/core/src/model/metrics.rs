use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub predicted: bool,
    pub actual: bool,
}

impl LabeledPrediction {
    pub fn new(predicted: bool, actual: bool) -> Self {
        Self { predicted, actual }
    }
}

/// Confusion counts with precision, recall and F1.
///
/// Ratios whose denominator is zero are reported as 0 and flagged in
/// `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no judgments to score")]
    EmptyInput,
}

pub fn score_binary(judgments: &[LabeledPrediction]) -> Result<BinaryReport, MetricError> {
    if judgments.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for j in judgments {
        match (j.predicted, j.actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(BinaryReport::from_counts(tp, fp, fn_, tn))
}

impl BinaryReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let mut undefined = Vec::new();
        let ratio = |num: u64, den: u64, name: &str, undefined: &mut Vec<String>| {
            if den == 0 {
                undefined.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, "precision", &mut undefined);
        let recall = ratio(tp, tp + fn_, "recall", &mut undefined);
        let f1 = if precision + recall > 0.0 {
            harmonic_mean(precision, recall)
        } else {
            undefined.push("f1".to_string());
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            undefined,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `2PR / (P + R)`; zero when both are zero.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}
