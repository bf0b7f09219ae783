//! `report` stage: figures and tables for each evaluated model.
//!
//! Per model, under `reports/<model>/`: `loss.png`, `accuracy.png`,
//! `confusion.png`, `roc.png`, and their data as `history.csv`,
//! `confusion.csv`, `roc.csv` and `roc_legend.txt` (one legend entry per
//! line); `per_class.csv` and `summary.csv` hold integer percentages and
//! `run.json` the full-precision results. `reports/comparison.csv` ranks
//! all models by test accuracy.

mod canvas;
mod font;
pub mod plots;
pub mod tables;

use std::path::Path;

use jutepest_core::metrics::ConfusionMatrix;
use jutepest_core::roc::RocSet;
use jutepest_core::train::TrainingHistory;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{save_artifact, RunArtifact};
use crate::imaging::{save_png, write_file};

pub const MODEL_FILES: [&str; 11] = [
    "loss.png",
    "accuracy.png",
    "confusion.png",
    "roc.png",
    "history.csv",
    "confusion.csv",
    "roc.csv",
    "roc_legend.txt",
    "per_class.csv",
    "summary.csv",
    "run.json",
];

pub fn emit_history_plots(history: &TrainingHistory, model: &str, dir: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(Error::Report(format!("{model}: training history is empty")));
    }
    let (loss, acc) = plots::history_charts(history, model);
    save_png(&loss.into_image(), &dir.join("loss.png"))?;
    save_png(&acc.into_image(), &dir.join("accuracy.png"))?;
    tables::write_history(&dir.join("history.csv"), history)
}

pub fn emit_confusion_plot(cm: &ConfusionMatrix, names: &[String], model: &str, dir: &Path) -> Result<()> {
    if names.len() != cm.classes() {
        return Err(Error::Report(format!("{model}: {} class names for a {}-class matrix", names.len(), cm.classes())));
    }
    save_png(&plots::confusion_heatmap(cm, names, model).into_image(), &dir.join("confusion.png"))?;
    tables::write_confusion(&dir.join("confusion.csv"), cm, names)
}

pub fn emit_roc_plot(set: &RocSet, model: &str, dir: &Path) -> Result<()> {
    save_png(&plots::roc_chart(set, model).into_image(), &dir.join("roc.png"))?;
    tables::write_roc(&dir.join("roc.csv"), set)?;
    let mut legend = plots::roc_legend(set).join("\n");
    legend.push('\n');
    write_file(&dir.join("roc_legend.txt"), legend.as_bytes())
}

/// Per-class and summary tables for each run plus the comparison table.
pub fn emit_metric_tables(runs: &[RunArtifact], reports_dir: &Path) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::Report("no evaluated models to report".into()));
    }
    for a in runs {
        let dir = reports_dir.join(a.model_id.as_str());
        tables::write_rows(&dir.join("per_class.csv"), &tables::per_class_rows(a))?;
        tables::write_rows(&dir.join("summary.csv"), &[tables::summary_row(a)])?;
    }
    tables::write_rows(&reports_dir.join("comparison.csv"), &tables::comparison_rows(runs))
}

/// Every figure and table for `runs`, models rendered in parallel.
pub fn emit_all(runs: &[RunArtifact], reports_dir: &Path) -> Result<()> {
    runs.par_iter().try_for_each(|a| {
        let dir = reports_dir.join(a.model_id.as_str());
        let name = a.model_id.display_name();
        emit_history_plots(&a.history, name, &dir)?;
        emit_confusion_plot(&a.confusion, &a.class_names, name, &dir)?;
        emit_roc_plot(&a.roc, name, &dir)?;
        save_artifact(a, &dir.join("run.json"))
    })?;
    emit_metric_tables(runs, reports_dir)
}
