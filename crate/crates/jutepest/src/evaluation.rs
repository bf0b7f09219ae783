//! `evaluate` stage: test-split predictions, confusion matrix, metrics
//! and ROC curves, bundled into one [`RunArtifact`] per model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use jutepest_core::backbone::BackboneId;
use jutepest_core::metrics::{self, AggregateMetrics, ClassMetrics, ConfusionMatrix};
use jutepest_core::roc::{self, RocSet};
use jutepest_core::split::Split;
use jutepest_core::train::{PredictionSet, TrainingHistory};
use jutepest_core::ClassCatalog;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{PipelineConfig, Stage};
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::imaging::write_file;
use crate::training::{self, split_items};
use crate::workdir::Workdir;

/// Everything reported for one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub model_id: BackboneId,
    pub config_digest: String,
    pub best_epoch: u32,
    pub class_names: Vec<String>,
    pub history: TrainingHistory,
    pub confusion: ConfusionMatrix,
    /// Percentages at full precision, in catalog order.
    pub per_class: Vec<ClassMetrics>,
    pub aggregate: AggregateMetrics,
    pub roc: RocSet,
}

/// Derives the metric suite from a prediction set.
pub fn summarize(
    model_id: BackboneId,
    catalog: &ClassCatalog,
    history: TrainingHistory,
    best_epoch: u32,
    predictions: &PredictionSet,
    config_digest: String,
) -> Result<RunArtifact> {
    let confusion = ConfusionMatrix::from_predictions(predictions)?;
    let per_class = metrics::per_class_metrics(&confusion);
    let aggregate = metrics::aggregate_metrics(&confusion, &per_class);
    let roc = roc::averaged_roc(predictions)?;
    Ok(RunArtifact {
        model_id,
        config_digest,
        best_epoch,
        class_names: catalog.names().to_vec(),
        history,
        confusion,
        per_class,
        aggregate,
        roc,
    })
}

pub fn run(cfg: &PipelineConfig, wd: &Workdir, manifest: &DatasetManifest, backbone: BackboneId) -> Result<RunArtifact> {
    let ck_path = wd.checkpoint(backbone);
    if !ck_path.is_file() {
        return Err(Error::Prerequisite { stage: "train", what: format!("no checkpoint for {backbone} at {}", ck_path.display()) });
    }
    let ck = Checkpoint::load(&ck_path)?;
    if ck.config_digest != cfg.digest(Stage::Train) {
        return Err(Error::Stale { stage: "train", path: ck_path });
    }
    if ck.catalog != manifest.catalog {
        return Err(Error::Stale { stage: "train", path: ck_path });
    }
    let history = training::load_history(&wd.history(backbone))?;
    let model = ck.model(cfg.weights_dir().as_deref())?;
    let items = split_items(wd, manifest, None, Split::Test);
    let features = training::extract_features(&model.extractor, &items)?;
    let predictions = jutepest_core::train::predict(&model.head, &features)?;
    let artifact = summarize(backbone, &ck.catalog, history, ck.best_epoch, &predictions, ck.config_digest.clone())?;

    let paths: Vec<&str> = manifest.in_split(Split::Test).map(|s| s.path.as_str()).collect();
    write_file(&wd.predictions(backbone), render_predictions(&paths, &predictions).as_bytes())?;
    save_artifact(&artifact, &wd.run_artifact(backbone))?;
    log::info!(
        "{backbone}: test accuracy {:.2}% on {} images",
        artifact.aggregate.accuracy,
        predictions.len()
    );
    Ok(artifact)
}

pub fn render_predictions(paths: &[&str], set: &PredictionSet) -> String {
    let mut out = String::from("path\ttruth\tpredicted");
    for c in 0..set.classes {
        write!(out, "\tp{c}").unwrap();
    }
    out.push('\n');
    for (p, e) in paths.iter().zip(&set.entries) {
        write!(out, "{p}\t{}\t{}", e.truth, e.predicted).unwrap();
        for v in &e.probabilities {
            write!(out, "\t{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_artifact(a: &RunArtifact, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(a).expect("artifact serializes");
    write_file(path, json.as_bytes())
}

pub fn load_artifact(path: &Path) -> Result<RunArtifact> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_json_round_trip() {
        let catalog = ClassCatalog::new(["a", "b"].map(String::from)).unwrap();
        let mut set = PredictionSet::new(2);
        for (t, p) in [(0, 0.9), (0, 0.4), (1, 0.2), (1, 0.35)] {
            set.push(t, vec![p, 1.0 - p]);
        }
        let a = summarize(BackboneId::Vgg19, &catalog, TrainingHistory::default(), 1, &set, "d".into()).unwrap();
        assert_eq!(a.confusion.counts(), &[1, 1, 0, 2]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        save_artifact(&a, &p).unwrap();
        assert_eq!(load_artifact(&p).unwrap(), a);
    }
}
