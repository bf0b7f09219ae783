//! CSV tables: per-class metrics, run summary, model comparison, and the
//! raw series behind every figure.

use std::path::Path;

use jutepest_core::backbone::BackboneId;
use jutepest_core::metrics::ConfusionMatrix;
use jutepest_core::roc::{RocCurve, RocLabel, RocSet};
use jutepest_core::train::{EpochRecord, TrainingHistory};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::RunArtifact;

/// Nearest integer, halves rounded up.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRow {
    pub class_index: usize,
    pub class: String,
    pub precision: i64,
    pub recall: i64,
    pub f1: i64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: BackboneId,
    pub accuracy: i64,
    pub macro_precision: i64,
    pub macro_recall: i64,
    pub macro_f1: i64,
    pub weighted_precision: i64,
    pub weighted_recall: i64,
    pub weighted_f1: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rank: usize,
    pub model: BackboneId,
    pub precision: i64,
    pub recall: i64,
    pub f1: i64,
    pub accuracy: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistoryRow {
    epoch: u32,
    train_loss: f64,
    train_acc: f64,
    val_loss: f64,
    val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RocRow {
    curve: String,
    auc: f64,
    fpr: f64,
    tpr: f64,
}

pub fn per_class_rows(a: &RunArtifact) -> Vec<PerClassRow> {
    a.per_class
        .iter()
        .enumerate()
        .map(|(i, m)| PerClassRow {
            class_index: i,
            class: a.class_names[i].clone(),
            precision: round_half_up(m.precision),
            recall: round_half_up(m.recall),
            f1: round_half_up(m.f1),
            support: m.support,
        })
        .collect()
}

pub fn summary_row(a: &RunArtifact) -> SummaryRow {
    let g = &a.aggregate;
    SummaryRow {
        model: a.model_id,
        accuracy: round_half_up(g.accuracy),
        macro_precision: round_half_up(g.macro_avg.precision),
        macro_recall: round_half_up(g.macro_avg.recall),
        macro_f1: round_half_up(g.macro_avg.f1),
        weighted_precision: round_half_up(g.weighted.precision),
        weighted_recall: round_half_up(g.weighted.recall),
        weighted_f1: round_half_up(g.weighted.f1),
    }
}

/// Macro scores per model, best accuracy first (ties keep input order).
pub fn comparison_rows(runs: &[RunArtifact]) -> Vec<ComparisonRow> {
    let mut order: Vec<&RunArtifact> = runs.iter().collect();
    order.sort_by(|a, b| b.aggregate.accuracy.total_cmp(&a.aggregate.accuracy));
    order
        .into_iter()
        .enumerate()
        .map(|(i, a)| ComparisonRow {
            rank: i + 1,
            model: a.model_id,
            precision: round_half_up(a.aggregate.macro_avg.precision),
            recall: round_half_up(a.aggregate.macro_avg.recall),
            f1: round_half_up(a.aggregate.macro_avg.f1),
            accuracy: round_half_up(a.aggregate.accuracy),
        })
        .collect()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::parse(path, line, e.to_string())
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    crate::imaging::write_file(path, &bytes)
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

pub fn write_history(path: &Path, h: &TrainingHistory) -> Result<()> {
    let rows: Vec<HistoryRow> = h
        .epochs
        .iter()
        .map(|e| HistoryRow { epoch: e.epoch, train_loss: e.train_loss, train_acc: e.train_accuracy, val_loss: e.val_loss, val_acc: e.val_accuracy })
        .collect();
    write_rows(path, &rows)
}

pub fn read_history(path: &Path) -> Result<TrainingHistory> {
    let rows: Vec<HistoryRow> = read_rows(path)?;
    Ok(TrainingHistory {
        epochs: rows
            .into_iter()
            .map(|r| EpochRecord { epoch: r.epoch, train_loss: r.train_loss, train_accuracy: r.train_acc, val_loss: r.val_loss, val_accuracy: r.val_acc })
            .collect(),
    })
}

/// Header row `true\predicted` followed by the class names; one row per
/// true class.
pub fn write_confusion(path: &Path, cm: &ConfusionMatrix, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (t, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(cm.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    crate::imaging::write_file(path, &bytes)
}

pub fn read_confusion(path: &Path) -> Result<(ConfusionMatrix, Vec<String>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let names: Vec<String> = r.headers().map_err(csv_err(path))?.iter().skip(1).map(String::from).collect();
    let mut counts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        for v in rec.iter().skip(1) {
            counts.push(v.parse::<u64>().map_err(|e| Error::parse(path, i + 2, e.to_string()))?);
        }
    }
    Ok((ConfusionMatrix::from_counts(names.len(), counts)?, names))
}

fn curve_name(l: RocLabel) -> String {
    match l {
        RocLabel::Class(i) => format!("class {i}"),
        RocLabel::Micro => "micro".into(),
        RocLabel::Macro => "macro".into(),
    }
}

fn parse_curve_name(s: &str) -> Option<RocLabel> {
    match s {
        "micro" => Some(RocLabel::Micro),
        "macro" => Some(RocLabel::Macro),
        _ => s.strip_prefix("class ")?.parse().ok().map(RocLabel::Class),
    }
}

/// Every curve point with its curve's area, per-class curves first.
pub fn write_roc(path: &Path, set: &RocSet) -> Result<()> {
    let rows: Vec<RocRow> = set
        .per_class
        .iter()
        .chain([&set.micro, &set.macro_avg])
        .flat_map(|c| c.points.iter().map(move |&(fpr, tpr)| RocRow { curve: curve_name(c.label), auc: c.auc, fpr, tpr }))
        .collect();
    write_rows(path, &rows)
}

pub fn read_roc(path: &Path) -> Result<RocSet> {
    let rows: Vec<RocRow> = read_rows(path)?;
    let mut curves: Vec<RocCurve> = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        let label = parse_curve_name(&r.curve).ok_or_else(|| Error::parse(path, i + 2, format!("unknown curve `{}`", r.curve)))?;
        match curves.last_mut() {
            Some(c) if c.label == label => c.points.push((r.fpr, r.tpr)),
            _ => curves.push(RocCurve { label, points: vec![(r.fpr, r.tpr)], auc: r.auc }),
        }
    }
    let macro_avg = curves.pop().filter(|c| c.label == RocLabel::Macro);
    let micro = curves.pop().filter(|c| c.label == RocLabel::Micro);
    match (micro, macro_avg) {
        (Some(micro), Some(macro_avg)) => Ok(RocSet { per_class: curves, micro, macro_avg }),
        _ => Err(Error::parse(path, 0, "micro and macro curves must come last")),
    }
}
