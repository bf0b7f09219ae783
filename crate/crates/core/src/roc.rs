//! One-vs-rest ROC curves, micro and macro averaging, and AUC.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::train::PredictionSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RocError {
    #[error("class {class}: ROC needs at least one positive and one negative sample ({positives} positives of {total})")]
    SingleClass { class: usize, positives: usize, total: usize },
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    Length { scores: usize, labels: usize },
    #[error("non-finite score at sample {0}")]
    NonFinite(usize),
    #[error("no curves to average")]
    NoCurves,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "class")]
pub enum RocLabel {
    Class(usize),
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub label: RocLabel,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, fpr nondecreasing.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Trapezoidal area under a polyline.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Empirical ROC of `scores` against binary `positive` labels.
///
/// Thresholds sweep every distinct score from high to low (the sentinel
/// above the maximum gives `(0, 0)`, the one below the minimum `(1, 1)`).
/// Tied scores move both rates at once, so ties contribute diagonal
/// segments. The area is accumulated in integer units of `1 / (2PN)`,
/// which makes it equal, bit for bit, to the pairwise ranking probability
/// `(wins + ties / 2) / (P * N)`.
pub fn roc_curve(scores: &[f64], positive: &[bool], label: RocLabel) -> Result<RocCurve, RocError> {
    if scores.len() != positive.len() {
        return Err(RocError::Length { scores: scores.len(), labels: positive.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(RocError::NonFinite(i));
    }
    let p = positive.iter().filter(|&&b| b).count() as u64;
    let n = positive.len() as u64 - p;
    if p == 0 || n == 0 {
        let class = match label {
            RocLabel::Class(c) => c,
            _ => usize::MAX,
        };
        return Err(RocError::SingleClass { class, positives: p as usize, total: positive.len() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(order.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    let auc = twice_area as f64 / (2 * p as u128 * n as u128) as f64;
    Ok(RocCurve { label, points, auc })
}

/// ROC of class `c` from a prediction set, one-vs-rest.
pub fn class_roc(set: &PredictionSet, c: usize) -> Result<RocCurve, RocError> {
    let positive: Vec<bool> = set.entries.iter().map(|e| e.truth == c).collect();
    roc_curve(&set.scores(c), &positive, RocLabel::Class(c))
}

/// Micro average: one ROC over every (sample, class) pair pooled together.
/// `columns[c]` holds class `c`'s scores and indicators.
pub fn micro_roc(columns: &[(Vec<f64>, Vec<bool>)]) -> Result<RocCurve, RocError> {
    if columns.is_empty() {
        return Err(RocError::NoCurves);
    }
    let scores: Vec<f64> = columns.iter().flat_map(|(s, _)| s.iter().copied()).collect();
    let positive: Vec<bool> = columns.iter().flat_map(|(_, y)| y.iter().copied()).collect();
    roc_curve(&scores, &positive, RocLabel::Micro)
}

/// Left and right limits of a curve's TPR at `x`, by linear interpolation
/// between neighbouring points. They differ only at vertical segments.
fn tpr_limits(points: &[(f64, f64)], x: f64) -> (f64, f64) {
    let first = points.iter().position(|pt| pt.0 >= x).unwrap_or(points.len() - 1);
    let last = points.iter().rposition(|pt| pt.0 <= x).unwrap_or(0);
    let interp = |i: usize| {
        // segment (i-1, i) straddles x
        let (a, b) = (points[i - 1], points[i]);
        a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
    };
    let left = if points[first].0 == x { points[first].1 } else { interp(first) };
    let right = if points[last].0 == x { points[last].1 } else { interp(last + 1) };
    (left, right)
}

/// Macro average: the mean of the per-class TPR curves on the union of
/// their FPR breakpoints. Vertical jumps are kept as a pair of points, so
/// the averaged curve's area equals the mean of the per-class areas.
pub fn macro_roc(curves: &[RocCurve]) -> Result<RocCurve, RocError> {
    if curves.is_empty() {
        return Err(RocError::NoCurves);
    }
    let mut grid: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let k = curves.len() as f64;
    let mut points = Vec::with_capacity(grid.len() * 2);
    for &x in &grid {
        let (mut left, mut right) = (0.0, 0.0);
        for c in curves {
            let (l, r) = tpr_limits(&c.points, x);
            left += l;
            right += r;
        }
        let (left, right) = (left / k, right / k);
        points.push((x, left));
        if right != left {
            points.push((x, right));
        }
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { label: RocLabel::Macro, points, auc })
}

/// Per-class, micro and macro curves for a prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSet {
    pub per_class: Vec<RocCurve>,
    pub micro: RocCurve,
    pub macro_avg: RocCurve,
}

pub fn averaged_roc(set: &PredictionSet) -> Result<RocSet, RocError> {
    let per_class = (0..set.classes).map(|c| class_roc(set, c)).collect::<Result<Vec<_>, _>>()?;
    let columns: Vec<(Vec<f64>, Vec<bool>)> = (0..set.classes)
        .map(|c| (set.scores(c), set.entries.iter().map(|e| e.truth == c).collect()))
        .collect();
    let micro = micro_roc(&columns)?;
    let macro_avg = macro_roc(&per_class)?;
    Ok(RocSet { per_class, micro, macro_avg })
}
