//! Mini-batch training of the head on frozen features, and prediction.
//!
//! The backbone is frozen and dropout sits after pooling, so a sample's
//! pooled features never change during training. Training therefore runs
//! on precomputed feature vectors; the extractor is never touched.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::head::{argmax, categorical_cross_entropy, dropout, Adam, DenseHead, HeadError, OneHot};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("training split is empty")]
    EmptyTrain,
    #[error("validation split is empty")]
    EmptyValidation,
    #[error("features and labels differ in length ({features} vs {labels})")]
    Mismatch { features: usize, labels: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}; check feature scale and learning rate")]
    NonFiniteLoss { epoch: u32, batch: usize },
    #[error(transparent)]
    Head(#[from] HeadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    /// Keep the epoch with the highest validation accuracy; ties go to the
    /// lower validation loss, then to the earlier epoch.
    #[default]
    BestValidationAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub master_seed: u64,
    pub optimizer: Optimizer,
    pub checkpoint_policy: CheckpointPolicy,
}

impl Default for TrainingConfig {
    /// 50 epochs, batch 16, learning rate 0.001, seed 46.
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            learning_rate: 0.001,
            master_seed: seed::DEFAULT_MASTER_SEED,
            optimizer: Optimizer::Adam,
            checkpoint_policy: CheckpointPolicy::BestValidationAccuracy,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: u32,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Epoch with the best validation accuracy; ties go to the lower
    /// validation loss, then to the earlier epoch.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().fold(None, |best: Option<&EpochRecord>, e| match best {
            Some(b) if !improves(e, b) => Some(b),
            _ => Some(e),
        })
    }
}

fn improves(candidate: &EpochRecord, incumbent: &EpochRecord) -> bool {
    candidate.val_accuracy > incumbent.val_accuracy
        || (candidate.val_accuracy == incumbent.val_accuracy && candidate.val_loss < incumbent.val_loss)
}

/// Pooled features with their class indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet {
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn new(features: Vec<Vec<f32>>, labels: Vec<usize>) -> Result<Self, TrainError> {
        if features.len() != labels.len() {
            return Err(TrainError::Mismatch { features: features.len(), labels: labels.len() });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Head from the selected checkpoint epoch.
    pub head: DenseHead,
    pub history: TrainingHistory,
    pub best_epoch: u32,
}

/// Mean loss and accuracy with dropout off.
pub fn evaluate(head: &DenseHead, set: &FeatureSet) -> Result<(f64, f64), TrainError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in set.features.iter().zip(&set.labels) {
        let p = head.predict(x)?;
        loss += categorical_cross_entropy(&OneHot::new(y, head.classes())?, &p)?;
        correct += (argmax(&p) == y) as usize;
    }
    let n = set.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains `head` for `config.epochs` epochs.
///
/// Each epoch visits the training set in an order shuffled by the stream
/// `(seed, "shuffle", epoch)`, in batches of `batch_size` (the last may be
/// short). Dropout masks come from `(seed, "dropout", epoch, batch)`.
/// Training loss and accuracy are averaged over the epoch's forward passes
/// with dropout active; validation metrics are computed afterwards with
/// dropout off. `on_epoch` sees each record as it is produced.
pub fn train(
    mut head: DenseHead,
    train_set: &FeatureSet,
    val_set: &FeatureSet,
    dropout_rate: f64,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let mut opt = match config.optimizer {
        Optimizer::Adam => Adam::new(config.learning_rate),
    };
    let mut history = TrainingHistory::default();
    let mut best: Option<(EpochRecord, DenseHead)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        seed::shuffle(&mut order, &mut seed::stream(config.master_seed, "shuffle", &[epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut rng = seed::stream(config.master_seed, "dropout", &[epoch as u64, b as u64]);
            let inputs: Vec<Vec<f64>> = batch.iter().map(|&i| dropout(&train_set.features[i], dropout_rate, &mut rng)).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, grad, probs) = head.loss_and_grad(&inputs, &labels)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * batch.len() as f64;
            correct += probs.iter().zip(&labels).filter(|(p, &y)| argmax(p) == y).count();
            opt.step(&mut head, &grad);
        }
        let n = train_set.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&head, val_set)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let record = EpochRecord { epoch, train_loss: loss_sum / n, train_accuracy: correct as f64 / n, val_loss, val_accuracy };
        on_epoch(&record);
        history.epochs.push(record);
        if best.as_ref().is_none_or(|(b, _)| improves(&record, b)) {
            best = Some((record, head.clone()));
        }
    }
    let (record, head) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { head, history, best_epoch: record.epoch })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub truth: usize,
    pub probabilities: Vec<f64>,
    /// `argmax(probabilities)`, lowest index on ties.
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub classes: usize,
    pub entries: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(classes: usize) -> Self {
        Self { classes, entries: Vec::new() }
    }

    pub fn push(&mut self, truth: usize, probabilities: Vec<f64>) {
        let predicted = argmax(&probabilities);
        self.entries.push(Prediction { truth, probabilities, predicted });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truths(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.truth).collect()
    }

    pub fn predicted(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.predicted).collect()
    }

    /// Probability column of class `c`.
    pub fn scores(&self, c: usize) -> Vec<f64> {
        self.entries.iter().map(|e| e.probabilities[c]).collect()
    }
}

/// Runs the head on each feature vector (dropout off).
pub fn predict(head: &DenseHead, set: &FeatureSet) -> Result<PredictionSet, TrainError> {
    let mut out = PredictionSet::new(head.classes());
    for (x, &y) in set.features.iter().zip(&set.labels) {
        out.push(y, head.predict(x)?);
    }
    Ok(out)
}
