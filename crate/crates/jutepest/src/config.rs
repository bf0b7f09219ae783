//! Pipeline configuration file (TOML) and per-stage settings digests.

use std::fs;
use std::path::{Path, PathBuf};

use jutepest_core::augment::AugmentationConfig;
use jutepest_core::backbone::BackboneId;
use jutepest_core::preprocess::PreprocessConfig;
use jutepest_core::seed::DEFAULT_MASTER_SEED;
use jutepest_core::split::SplitRatios;
use jutepest_core::train::TrainingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::CatalogMode;
use crate::error::{Error, Result};

/// Environment variable naming the pretrained weights directory.
pub const WEIGHTS_DIR_ENV: &str = "JUTEPEST_WEIGHTS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSource {
    /// Seeded random-feature stem; needs no files.
    #[default]
    Surrogate,
    /// `<weights_dir>/<backbone>.stem`; missing files are fatal.
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSection {
    #[serde(flatten)]
    pub params: AugmentationConfig,
    /// Also expand the validation split (training split is always expanded).
    pub apply_to_validation: bool,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self { params: AugmentationConfig::default(), apply_to_validation: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadSection {
    pub dropout_rate: f64,
}

impl Default for HeadSection {
    fn default() -> Self {
        Self { dropout_rate: 0.30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    pub workdir: PathBuf,
    /// Master seed for every random stream (split, augmentation, head
    /// init, batch order, dropout).
    pub seed: u64,
    pub backbones: Vec<BackboneId>,
    pub weights: WeightSource,
    pub weights_dir: Option<PathBuf>,
    pub catalog: CatalogMode,
    pub preprocess: PreprocessConfig,
    pub split: SplitRatios,
    pub augmentation: AugmentSection,
    pub head: HeadSection,
    pub training: TrainingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            workdir: PathBuf::from("work"),
            seed: DEFAULT_MASTER_SEED,
            backbones: BackboneId::ALL.to_vec(),
            weights: WeightSource::default(),
            weights_dir: None,
            catalog: CatalogMode::default(),
            preprocess: PreprocessConfig::default(),
            split: SplitRatios::default(),
            augmentation: AugmentSection::default(),
            head: HeadSection::default(),
            training: TrainingConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset_root: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Split,
    Augment,
    Train,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset_root {
            self.dataset_root = v.clone();
        }
        if let Some(v) = &o.workdir {
            self.workdir = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.epochs {
            self.training.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.training.batch_size = v;
        }
        if let Some(v) = o.learning_rate {
            self.training.learning_rate = v;
        }
        self.training.master_seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.preprocess.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.augmentation.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.training.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..1.0).contains(&self.head.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.head.dropout_rate));
        }
        if self.backbones.is_empty() {
            return bad("backbone list is empty".into());
        }
        if self.training.master_seed != self.seed {
            return bad("training.master_seed must equal seed (set `seed` only)".into());
        }
        let norm = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
        if norm(&self.dataset_root) == norm(&self.workdir) {
            return bad("workdir must differ from dataset_root".into());
        }
        Ok(())
    }

    pub fn weights_dir(&self) -> Option<PathBuf> {
        std::env::var_os(WEIGHTS_DIR_ENV).map(PathBuf::from).or_else(|| self.weights_dir.clone())
    }

    /// Hex SHA-256 over every setting that influences `stage`'s outputs
    /// (each stage includes the settings of the stages before it).
    pub fn digest(&self, stage: Stage) -> String {
        let mut parts = vec![
            serde_json::to_string(&self.dataset_root).unwrap(),
            serde_json::to_string(&self.catalog).unwrap(),
            serde_json::to_string(&self.preprocess).unwrap(),
        ];
        if matches!(stage, Stage::Split | Stage::Augment | Stage::Train) {
            parts.push(serde_json::to_string(&(&self.split, self.seed)).unwrap());
        }
        if matches!(stage, Stage::Augment | Stage::Train) {
            parts.push(serde_json::to_string(&self.augmentation).unwrap());
        }
        if stage == Stage::Train {
            parts.push(serde_json::to_string(&(&self.weights, &self.head, &self.training)).unwrap());
        }
        hex(&Sha256::digest(parts.join("\n").as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_setup() {
        let c = PipelineConfig::default();
        assert_eq!((c.training.epochs, c.training.batch_size, c.training.learning_rate, c.seed), (50, 16, 0.001, 46));
        assert_eq!(c.split, SplitRatios::new(0.7, 0.15, 0.15).unwrap());
        assert_eq!(c.head.dropout_rate, 0.3);
        assert_eq!(c.augmentation.params.iterations * c.augmentation.params.samples_per_iteration, 320);
        assert_eq!(c.backbones.len(), 5);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = PipelineConfig::default();
        assert_eq!(toml::from_str::<PipelineConfig>(&c.to_toml()).unwrap(), c);
        let partial: PipelineConfig = toml::from_str(
            "dataset_root = \"pests\"\nbackbones = [\"vgg19\"]\n[training]\nepochs = 5\n[augmentation]\niterations = 2\n[catalog]\nmode = \"explicit\"\nclasses = [\"a\", \"b\"]\n",
        )
        .unwrap();
        assert_eq!(partial.training.epochs, 5);
        assert_eq!(partial.training.batch_size, 16);
        assert_eq!(partial.augmentation.params.iterations, 2);
        assert_eq!(partial.augmentation.params.samples_per_iteration, 16);
        assert_eq!(partial.backbones, vec![BackboneId::Vgg19]);
        assert_eq!(partial.catalog, CatalogMode::Explicit(vec!["a".into(), "b".into()]));
    }

    #[test]
    fn overrides_win() {
        let mut c = PipelineConfig::default();
        c.apply(&Overrides { seed: Some(7), epochs: Some(3), batch_size: Some(4), learning_rate: Some(0.01), ..Default::default() });
        assert_eq!((c.seed, c.training.master_seed, c.training.epochs, c.training.batch_size), (7, 7, 3, 4));
        assert_eq!(c.training.learning_rate, 0.01);
        c.validate().unwrap();
    }

    #[test]
    fn digests_track_stage_inputs() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.training.epochs = 3;
        assert_eq!(a.digest(Stage::Augment), b.digest(Stage::Augment));
        assert_ne!(a.digest(Stage::Train), b.digest(Stage::Train));
        b.seed = 1;
        assert_ne!(a.digest(Stage::Split), b.digest(Stage::Split));
        assert_eq!(a.digest(Stage::Ingest), b.digest(Stage::Ingest));
    }

    #[test]
    fn invalid_configs() {
        let mut c = PipelineConfig { workdir: "same".into(), dataset_root: "same".into(), ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.workdir = "w".into();
        c.training.epochs = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
