//! Stage orchestration: prerequisite and staleness checks between
//! stages, the effective-config record, and single-image prediction.

use std::path::Path;

use jutepest_core::backbone::BackboneId;
use jutepest_core::preprocess;
use jutepest_core::train::TrainingHistory;

use crate::augmentation::{self, ProvenanceTable};
use crate::checkpoint::Checkpoint;
use crate::config::{PipelineConfig, Stage};
use crate::dataset::{self, DatasetManifest};
use crate::error::{Error, Result};
use crate::evaluation::{self, RunArtifact};
use crate::workdir::{RunLock, Workdir};
use crate::{imaging, ingest, report, training};

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePrediction {
    pub backbone: BackboneId,
    pub class_index: usize,
    pub class_name: String,
    pub probability: f64,
    pub probabilities: Vec<f64>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    wd: Workdir,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let wd = Workdir::new(&cfg.workdir);
        Ok(Self { cfg, wd })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn workdir(&self) -> &Workdir {
        &self.wd
    }

    /// Takes the workdir lock and records the effective configuration.
    pub fn begin(&self) -> Result<RunLock> {
        let lock = self.wd.lock()?;
        imaging::write_file(&self.wd.effective_config(), self.cfg.to_toml().as_bytes())?;
        Ok(lock)
    }

    pub fn ingest(&self) -> Result<DatasetManifest> {
        ingest::run(&self.cfg, &self.wd)
    }

    fn ingested(&self) -> Result<DatasetManifest> {
        let path = self.wd.manifest();
        if !path.is_file() {
            return Err(Error::Prerequisite { stage: "ingest", what: format!("dataset manifest {}", path.display()) });
        }
        let m = dataset::load_manifest(&path)?;
        if m.digest.as_deref() != Some(&self.cfg.digest(Stage::Ingest)) {
            return Err(Error::Stale { stage: "ingest", path });
        }
        Ok(m)
    }

    pub fn split(&self) -> Result<DatasetManifest> {
        let m = self.ingested()?;
        let mut out = dataset::stratified_split(&m, self.cfg.split, self.cfg.seed)?;
        out.digest = Some(self.cfg.digest(Stage::Split));
        dataset::persist_manifest(&out, &self.wd.split_manifest())?;
        for (c, n) in out.split_counts().iter().enumerate() {
            log::info!("{}: train {} / validation {} / test {}", out.catalog.names()[c], n[0], n[1], n[2]);
        }
        Ok(out)
    }

    /// The split manifest, after checking every earlier stage.
    pub fn splitted(&self) -> Result<DatasetManifest> {
        let path = self.wd.split_manifest();
        if !path.is_file() {
            self.ingested()?;
            return Err(Error::Prerequisite { stage: "split", what: format!("split manifest {}", path.display()) });
        }
        let m = dataset::load_manifest(&path)?;
        if m.digest.as_deref() != Some(&self.cfg.digest(Stage::Split)) || !m.is_split() {
            return Err(Error::Stale { stage: "split", path });
        }
        Ok(m)
    }

    pub fn augment(&self) -> Result<ProvenanceTable> {
        let m = self.splitted()?;
        augmentation::run(&self.cfg, &self.wd, &m)
    }

    fn augmented(&self) -> Result<ProvenanceTable> {
        let path = self.wd.provenance();
        if !path.is_file() {
            return Err(Error::Prerequisite { stage: "augment", what: format!("augmentation provenance {}", path.display()) });
        }
        let t = augmentation::load(&path)?;
        if t.digest.as_deref() != Some(&self.cfg.digest(Stage::Augment)) {
            return Err(Error::Stale { stage: "augment", path });
        }
        Ok(t)
    }

    pub fn train(&self, backbone: BackboneId) -> Result<(Checkpoint, TrainingHistory)> {
        let m = self.splitted()?;
        let prov = self.augmented()?;
        training::run(&self.cfg, &self.wd, &m, &prov, backbone)
    }

    pub fn evaluate(&self, backbone: BackboneId) -> Result<RunArtifact> {
        let m = self.splitted()?;
        evaluation::run(&self.cfg, &self.wd, &m, backbone)
    }

    /// Evaluation results for every configured backbone that has one.
    pub fn evaluated(&self) -> Result<Vec<RunArtifact>> {
        let digest = self.cfg.digest(Stage::Train);
        let mut runs = Vec::new();
        for &id in &self.cfg.backbones {
            let path = self.wd.run_artifact(id);
            if !path.is_file() {
                continue;
            }
            let a = evaluation::load_artifact(&path)?;
            if a.config_digest != digest {
                return Err(Error::Stale { stage: "evaluate", path });
            }
            runs.push(a);
        }
        if runs.is_empty() {
            return Err(Error::Prerequisite { stage: "evaluate", what: "evaluation results for the configured backbones".into() });
        }
        Ok(runs)
    }

    pub fn report(&self) -> Result<Vec<RunArtifact>> {
        let runs = self.evaluated()?;
        report::emit_all(&runs, &self.wd.reports_dir())?;
        log::info!("reports written to {}", self.wd.reports_dir().display());
        Ok(runs)
    }

    /// Every stage, for every configured backbone.
    pub fn all(&self) -> Result<Vec<RunArtifact>> {
        self.ingest()?;
        self.split()?;
        self.augment()?;
        for &id in &self.cfg.backbones {
            self.train(id)?;
            self.evaluate(id)?;
        }
        self.report()
    }

    /// Backbone used when none is named: the most accurate evaluated
    /// model, else the first configured backbone with a checkpoint.
    pub fn default_backbone(&self) -> Result<BackboneId> {
        if let Ok(runs) = self.evaluated() {
            let best = runs.iter().fold(None::<&RunArtifact>, |b, a| match b {
                Some(b) if b.aggregate.accuracy >= a.aggregate.accuracy => Some(b),
                _ => Some(a),
            });
            if let Some(a) = best {
                return Ok(a.model_id);
            }
        }
        self.cfg
            .backbones
            .iter()
            .copied()
            .find(|&id| self.wd.checkpoint(id).is_file())
            .ok_or_else(|| Error::Prerequisite { stage: "train", what: "a trained checkpoint".into() })
    }

    /// Classifies one image with the same preprocessing the training
    /// images went through.
    pub fn predict(&self, image: &Path, backbone: Option<BackboneId>) -> Result<ImagePrediction> {
        let backbone = match backbone {
            Some(b) => b,
            None => self.default_backbone()?,
        };
        let ck_path = self.wd.checkpoint(backbone);
        if !ck_path.is_file() {
            return Err(Error::Prerequisite { stage: "train", what: format!("no checkpoint for {backbone} at {}", ck_path.display()) });
        }
        let ck = Checkpoint::load(&ck_path)?;
        if ck.config_digest != self.cfg.digest(Stage::Train) {
            log::warn!("{} was trained with different settings than the current configuration", ck_path.display());
        }
        let model = ck.model(self.cfg.weights_dir().as_deref())?;
        let raw = imaging::decode(image)?;
        let processed = preprocess::preprocess(&raw, &self.cfg.preprocess)?.image;
        // processed images are stored as JPEG; classify the same pixels
        let stored = imaging::decode_bytes(&imaging::encode_jpeg(&processed)?, image)?;
        let rgb = jutepest_core::preprocess::to_rgb(&stored).map_err(|e| Error::Image { path: image.into(), message: e.to_string() })?;
        let size = model.spec.input_size;
        let input = preprocess::resize(&rgb, size.0, size.1).map_err(|e| Error::Image { path: image.into(), message: e.to_string() })?;
        let probabilities = model.predict_image(&input)?;
        let class_index = jutepest_core::head::argmax(&probabilities);
        Ok(ImagePrediction {
            backbone,
            class_index,
            class_name: ck.catalog.names()[class_index].clone(),
            probability: probabilities[class_index],
            probabilities,
        })
    }
}
