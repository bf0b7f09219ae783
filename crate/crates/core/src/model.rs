//! Frozen backbone + pooling/dropout/softmax head, with parameter
//! accounting.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::INPUT_SIZE;
use crate::backbone::{BackboneError, BackboneId, FeatureExtractor, PixelScaling};
use crate::head::{DenseHead, HeadConfig, HeadError};
use crate::raster::RgbImage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid head config: {0}")]
    Head(&'static str),
    #[error("extractor produces {got} features, {backbone} head expects {expected}")]
    FeatureWidth { backbone: BackboneId, expected: usize, got: usize },
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Forward(#[from] HeadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub id: BackboneId,
    pub feature_width: usize,
    pub base_param_count: u64,
    pub frozen: bool,
}

impl From<BackboneId> for BackboneSpec {
    fn from(id: BackboneId) -> Self {
        Self { id, feature_width: id.feature_width(), base_param_count: id.base_param_count(), frozen: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub total: u64,
    pub trainable: u64,
    pub non_trainable: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: BackboneSpec,
    pub head: HeadConfig,
    pub input_size: (u32, u32),
    pub scaling: PixelScaling,
}

impl ModelSpec {
    /// Every backbone is fed 224x224 inputs.
    pub fn new(backbone: BackboneId, num_classes: usize, dropout_rate: f64) -> Result<Self, ModelError> {
        let head = HeadConfig { dropout_rate, num_classes };
        head.validate().map_err(ModelError::Head)?;
        Ok(Self { backbone: backbone.into(), head, input_size: INPUT_SIZE, scaling: backbone.scaling() })
    }

    /// Dense weights `F x K` plus `K` biases are the only trainable
    /// parameters; pooling and dropout have none and the base is frozen.
    pub fn summary(&self) -> ModelSummary {
        let trainable = (self.backbone.feature_width as u64 + 1) * self.head.num_classes as u64;
        let non_trainable = self.backbone.base_param_count;
        ModelSummary { total: trainable + non_trainable, trainable, non_trainable }
    }
}

/// Parameter accounting for a built model.
pub fn parameter_summary(spec: &ModelSpec) -> ModelSummary {
    spec.summary()
}

/// A runnable model: the frozen extractor borrowed immutably, and the
/// trainable head.
#[derive(Debug, Clone)]
pub struct Model<E> {
    pub spec: ModelSpec,
    pub extractor: E,
    pub head: DenseHead,
}

impl<E: FeatureExtractor> Model<E> {
    /// Wires `extractor` to a freshly initialized head.
    pub fn build(spec: ModelSpec, extractor: E, master_seed: u64) -> Result<Self, ModelError> {
        let head = DenseHead::init(spec.backbone.feature_width, spec.head.num_classes, master_seed);
        Self::with_head(spec, extractor, head)
    }

    pub fn with_head(spec: ModelSpec, extractor: E, head: DenseHead) -> Result<Self, ModelError> {
        let expected = spec.backbone.feature_width;
        for got in [extractor.feature_width(), head.features()] {
            if got != expected {
                return Err(ModelError::FeatureWidth { backbone: spec.backbone.id, expected, got });
            }
        }
        if head.classes() != spec.head.num_classes {
            return Err(ModelError::Forward(HeadError::Length { expected: spec.head.num_classes, got: head.classes() }));
        }
        Ok(Self { spec, extractor, head })
    }

    pub fn features(&self, image: &RgbImage) -> Result<Vec<f32>, ModelError> {
        Ok(self.extractor.extract(image)?)
    }

    /// Class probabilities for one image, dropout off.
    pub fn predict_image(&self, image: &RgbImage) -> Result<Vec<f64>, ModelError> {
        Ok(self.head.predict(&self.features(image)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ConvStem;

    #[test]
    fn table_one_rows() {
        let rows = [
            (BackboneId::ResNet50, 23_622_545, 34_833, 23_587_712),
            (BackboneId::Vgg19, 20_033_105, 8_721, 20_024_384),
            (BackboneId::InceptionV3, 21_837_617, 34_833, 21_802_784),
            (BackboneId::MobileNetV2, 2_279_761, 21_777, 2_257_984),
            (BackboneId::DenseNet201, 18_354_641, 32_657, 18_321_984),
        ];
        for (id, total, trainable, frozen) in rows {
            let s = parameter_summary(&ModelSpec::new(id, 17, 0.3).unwrap());
            assert_eq!(s, ModelSummary { total, trainable, non_trainable: frozen }, "{id}");
        }
    }

    #[test]
    fn two_classes() {
        for id in BackboneId::ALL {
            let s = ModelSpec::new(id, 2, 0.3).unwrap().summary();
            assert_eq!(s.trainable, (id.feature_width() as u64 + 1) * 2);
        }
    }

    #[test]
    fn bad_head_config() {
        assert!(ModelSpec::new(BackboneId::Vgg19, 1, 0.3).is_err());
        assert!(ModelSpec::new(BackboneId::Vgg19, 17, 1.0).is_err());
    }

    #[test]
    fn inference_is_deterministic_and_normalized() {
        let spec = ModelSpec { input_size: (16, 16), ..ModelSpec::new(BackboneId::Vgg19, 3, 0.3).unwrap() };
        let stem = ConvStem::seeded(BackboneId::Vgg19, (16, 16), 46);
        let model = Model::build(spec, stem, 46).unwrap();
        let img = RgbImage::filled(16, 16, [10, 200, 30]);
        let a = model.predict_image(&img).unwrap();
        assert_eq!(a, model.predict_image(&img).unwrap());
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_rejected() {
        let spec = ModelSpec::new(BackboneId::ResNet50, 3, 0.3).unwrap();
        let stem = ConvStem::seeded(BackboneId::Vgg19, (224, 224), 46);
        assert!(matches!(Model::build(spec, stem, 46), Err(ModelError::FeatureWidth { .. })));
    }
}
