use advreg_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with "plaque" (label 1) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::Input("no predictions to score".into()));
        }
        if predictions.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::Input(format!("non-binary prediction {p} / label {y}"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

/// Row-wise argmax of `[N, 2]` logits; ties go to class 0.
pub fn argmax_predictions(logits: &Tensor) -> Result<Vec<u8>> {
    match logits.shape() {
        [_, 2] => Ok(logits
            .data()
            .chunks(2)
            .map(|row| u8::from(row[1] > row[0]))
            .collect()),
        other => Err(Error::Input(format!("expected [N, 2] logits, got {other:?}"))),
    }
}

/// Accuracy, sensitivity and specificity. A metric whose denominator is
/// zero is `None` and its name is listed in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: Option<String>,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub undefined: Vec<String>,
    pub counts: ConfusionCounts,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let accuracy = counts.accuracy();
        let sensitivity = counts.sensitivity();
        let specificity = counts.specificity();
        let undefined = [("accuracy", accuracy), ("sensitivity", sensitivity), ("specificity", specificity)]
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| n.to_string())
            .collect();
        Self {
            scenario: None,
            accuracy,
            sensitivity,
            specificity,
            undefined,
            counts,
            seed: None,
            config_digest: None,
        }
    }
}

/// Scores `[N, 2]` logits against binary labels.
pub fn compute_metrics(logits: &Tensor, labels: &[u8]) -> Result<MetricsReport> {
    let predictions = argmax_predictions(logits)?;
    Ok(MetricsReport::from_counts(ConfusionCounts::from_predictions(&predictions, labels)?))
}
