//! `train` stage: frozen-feature extraction and head training for one
//! backbone, with a per-epoch history file and a best-epoch checkpoint.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use jutepest_core::backbone::{BackboneId, FeatureExtractor};
use jutepest_core::head::DenseHead;
use jutepest_core::model::ModelSpec;
use jutepest_core::preprocess;
use jutepest_core::split::Split;
use jutepest_core::train::{self, EpochRecord, FeatureSet, TrainingHistory};
use jutepest_core::RgbImage;
use rayon::prelude::*;

use crate::augmentation::{augmented_splits, ProvenanceTable};
use crate::checkpoint::Checkpoint;
use crate::config::{PipelineConfig, Stage};
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::imaging;
use crate::ingest;
use crate::weights;
use crate::workdir::Workdir;

const HISTORY_COLUMNS: &str = "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc";

/// Loads an image and brings it to the extractor's input size.
pub fn input_image(path: &Path, size: (u32, u32)) -> Result<RgbImage> {
    let img = imaging::load_rgb(path)?;
    if (img.width(), img.height()) == size {
        return Ok(img);
    }
    preprocess::resize(&img, size.0, size.1).map_err(|e| Error::Image { path: path.into(), message: e.to_string() })
}

/// Pooled features for each `(path, label)`, in input order.
pub fn extract_features<E: FeatureExtractor>(extractor: &E, items: &[(PathBuf, usize)]) -> Result<FeatureSet> {
    let size = extractor.input_size();
    let features = items
        .par_iter()
        .map(|(p, _)| Ok(extractor.extract(&input_image(p, size)?)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureSet::new(features, items.iter().map(|(_, l)| *l).collect())?)
}

/// Processed originals of `split` followed by their augmented copies.
pub fn split_items(wd: &Workdir, manifest: &DatasetManifest, provenance: Option<&ProvenanceTable>, split: Split) -> Vec<(PathBuf, usize)> {
    let mut items: Vec<(PathBuf, usize)> =
        manifest.in_split(split).map(|s| (ingest::processed_path(wd, &s.path), s.class_index)).collect();
    if let Some(t) = provenance {
        items.extend(t.records.iter().filter(|r| r.split == split).map(|r| (wd.root().join(&r.file), r.class_index)));
    }
    items
}

pub fn run(cfg: &PipelineConfig, wd: &Workdir, manifest: &DatasetManifest, provenance: &ProvenanceTable, backbone: BackboneId) -> Result<(Checkpoint, TrainingHistory)> {
    cfg.validate()?;
    let classes = manifest.catalog.count();
    let spec = ModelSpec::new(backbone, classes, cfg.head.dropout_rate)?;
    let (stem, origin) = weights::resolve_extractor(cfg, backbone, spec.input_size)?;
    let splits = augmented_splits(cfg);
    let items = |split| split_items(wd, manifest, splits.contains(&split).then_some(provenance), split);
    let (train_items, val_items) = (items(Split::Train), items(Split::Validation));
    log::info!("{backbone}: extracting features for {} training and {} validation images", train_items.len(), val_items.len());
    let train_set = extract_features(&stem, &train_items)?;
    let val_set = extract_features(&stem, &val_items)?;

    let history_path = wd.history(backbone);
    if let Some(dir) = history_path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut file = File::create(&history_path).map_err(Error::io(&history_path))?;
    writeln!(file, "{HISTORY_COLUMNS}").map_err(Error::io(&history_path))?;
    let mut write_err = None;
    let head = DenseHead::init(spec.backbone.feature_width, classes, cfg.seed);
    let outcome = train::train(head, &train_set, &val_set, cfg.head.dropout_rate, &cfg.training, |e| {
        log::info!(
            "{backbone} epoch {}/{}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
            e.epoch,
            cfg.training.epochs,
            e.train_loss,
            e.train_accuracy,
            e.val_loss,
            e.val_accuracy
        );
        if write_err.is_none() {
            if let Err(err) = writeln!(file, "{}", history_row(e)).and_then(|_| file.flush()) {
                write_err = Some(err);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::Io { path: history_path, source: e });
    }
    let checkpoint = Checkpoint {
        spec,
        weights: origin,
        catalog: manifest.catalog.clone(),
        config_digest: cfg.digest(Stage::Train),
        best_epoch: outcome.best_epoch,
        head: outcome.head,
    };
    checkpoint.save(&wd.checkpoint(backbone))?;
    log::info!("{backbone}: best validation accuracy at epoch {}", outcome.best_epoch);
    Ok((checkpoint, outcome.history))
}

fn history_row(e: &EpochRecord) -> String {
    format!("{}\t{:?}\t{:?}\t{:?}\t{:?}", e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy)
}

pub fn render_history(h: &TrainingHistory) -> String {
    let mut out = format!("{HISTORY_COLUMNS}\n");
    for e in &h.epochs {
        out.push_str(&history_row(e));
        out.push('\n');
    }
    out
}

pub fn load_history(path: &Path) -> Result<TrainingHistory> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut history = TrainingHistory::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        let n = i + 1;
        if n == 1 {
            if line != HISTORY_COLUMNS {
                return Err(Error::parse(path, n, "unexpected history header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(path, n, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| Error::parse(path, n, format!("field {}: {e}", i + 1)));
        history.epochs.push(EpochRecord {
            epoch: f[0].parse().map_err(|e| Error::parse(path, n, format!("epoch: {e}")))?,
            train_loss: num(1)?,
            train_accuracy: num(2)?,
            val_loss: num(3)?,
            val_accuracy: num(4)?,
        });
    }
    Ok(history)
}
