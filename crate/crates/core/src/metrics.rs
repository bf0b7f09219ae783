//! Confusion matrix and the per-class / aggregate scores derived from it.
//!
//! Scores are percentages at full precision; rounding belongs to the
//! reporting layer. A ratio with a zero denominator is reported as 0.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::PredictionSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("sample {sample}: class index {index} outside 0..{classes}")]
    OutOfRange { sample: usize, index: usize, classes: usize },
    #[error("truths and predictions differ in length ({truths} vs {predictions})")]
    Length { truths: usize, predictions: usize },
}

/// `counts[t * k + p]` = samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_pairs(truths: &[usize], predictions: &[usize], classes: usize) -> Result<Self, MetricsError> {
        if truths.len() != predictions.len() {
            return Err(MetricsError::Length { truths: truths.len(), predictions: predictions.len() });
        }
        if truths.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut counts = vec![0u64; classes * classes];
        for (sample, (&t, &p)) in truths.iter().zip(predictions).enumerate() {
            for index in [t, p] {
                if index >= classes {
                    return Err(MetricsError::OutOfRange { sample, index, classes });
                }
            }
            counts[t * classes + p] += 1;
        }
        Ok(Self { classes, counts })
    }

    pub fn from_predictions(set: &PredictionSet) -> Result<Self, MetricsError> {
        Self::from_pairs(&set.truths(), &set.predicted(), set.classes)
    }

    /// Row-major `classes x classes` counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self, MetricsError> {
        if counts.len() != classes * classes {
            return Err(MetricsError::Length { truths: classes * classes, predictions: counts.len() });
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(MetricsError::Empty);
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.row(c).iter().sum()
    }

    pub fn binary_counts(&self, c: usize) -> BinaryCounts {
        let tp = self.get(c, c);
        let column: u64 = (0..self.classes).map(|t| self.get(t, c)).sum();
        let fp = column - tp;
        let fn_ = self.support(c) - tp;
        let tn = self.total() - tp - fp - fn_;
        BinaryCounts { tp, fp, fn_, tn }
    }
}

/// One-vs-rest counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `100 * num / den`, or 0 when `den == 0`.
pub fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Harmonic mean of two percentages, 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|c| {
            let b = cm.binary_counts(c);
            let precision = percent(b.tp, b.tp + b.fp);
            let recall = percent(b.tp, b.tp + b.fn_);
            ClassMetrics { precision, recall, f1: f1(precision, recall), support: b.tp + b.fn_ }
        })
        .collect()
}

/// Unweighted mean, computed as `v0 + sum(v_i - v0) / n` so a list of
/// identical values averages to exactly that value.
pub fn macro_mean(values: &[f64]) -> f64 {
    match values.first() {
        None => 0.0,
        Some(&first) => first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64,
    }
}

/// Support-weighted mean; 0 when all supports are 0.
pub fn weighted_mean(values: &[f64], supports: &[u64]) -> f64 {
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return 0.0;
    }
    values.iter().zip(supports).map(|(v, &s)| v * s as f64).sum::<f64>() / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// `100 * trace / total`.
    pub accuracy: f64,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
}

pub fn aggregate_metrics(cm: &ConfusionMatrix, per_class: &[ClassMetrics]) -> AggregateMetrics {
    let col = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).collect::<Vec<_>>();
    let (p, r, f) = (col(|m| m.precision), col(|m| m.recall), col(|m| m.f1));
    let supports: Vec<u64> = per_class.iter().map(|m| m.support).collect();
    AggregateMetrics {
        accuracy: percent(cm.trace(), cm.total()),
        macro_avg: Averages { precision: macro_mean(&p), recall: macro_mean(&r), f1: macro_mean(&f) },
        weighted: Averages {
            precision: weighted_mean(&p, &supports),
            recall: weighted_mean(&r, &supports),
            f1: weighted_mean(&f, &supports),
        },
    }
}
