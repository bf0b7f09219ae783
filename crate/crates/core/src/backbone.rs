//! Frozen convolutional backbones.
//!
//! [`BackboneId`] carries the reference accounting of each ImageNet
//! architecture (pooled feature width, frozen parameter count, canonical
//! input scaling). [`FeatureExtractor`] is what the pipeline actually runs:
//! an immutable image -> pooled-feature map. [`ConvStem`] is the in-crate
//! extractor: a stack of ReLU convolutions followed by global average
//! pooling, whose weights are either loaded from a weights file or drawn
//! deterministically from a seed (a random-feature stand-in when pretrained
//! weights are unavailable).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RgbImage;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackboneError {
    #[error("unknown backbone `{0}` (expected one of resnet50, vgg19, inceptionv3, mobilenetv2, densenet201)")]
    Unknown(alloc::string::String),
    #[error("layer {layer}: {reason}")]
    Layer { layer: usize, reason: &'static str },
    #[error("input is {got:?}, extractor expects {expected:?}")]
    InputSize { expected: (u32, u32), got: (u32, u32) },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneId {
    ResNet50,
    Vgg19,
    InceptionV3,
    MobileNetV2,
    DenseNet201,
}

/// How raw `[0, 255]` RGB is mapped before entering the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelScaling {
    /// BGR order, per-channel ImageNet mean subtracted, no scaling.
    Caffe,
    /// `x / 127.5 - 1`.
    Tf,
    /// `x / 255`, then ImageNet mean/std normalization.
    Torch,
}

impl PixelScaling {
    /// Scales one RGB pixel, returning channels in the order the backbone
    /// consumes them.
    #[inline]
    pub fn apply(self, rgb: [u8; 3]) -> [f32; 3] {
        let [r, g, b] = rgb.map(|v| v as f32);
        match self {
            PixelScaling::Caffe => [b - 103.939, g - 116.779, r - 123.68],
            PixelScaling::Tf => [r / 127.5 - 1.0, g / 127.5 - 1.0, b / 127.5 - 1.0],
            PixelScaling::Torch => [
                (r / 255.0 - 0.485) / 0.229,
                (g / 255.0 - 0.456) / 0.224,
                (b / 255.0 - 0.406) / 0.225,
            ],
        }
    }

    /// Reciprocal of half the mean per-channel output span over 0..=255:
    /// 1 for [-1, 1] scaling. Multiplying first-layer weights by it makes
    /// a stem respond alike whatever the scaling.
    pub fn input_gain(self) -> f64 {
        let (lo, hi) = (self.apply([0; 3]), self.apply([255; 3]));
        let span: f64 = (0..3).map(|i| (hi[i] - lo[i]) as f64).sum::<f64>() / 3.0;
        2.0 / span
    }
}

impl BackboneId {
    pub const ALL: [BackboneId; 5] = [
        BackboneId::ResNet50,
        BackboneId::Vgg19,
        BackboneId::InceptionV3,
        BackboneId::MobileNetV2,
        BackboneId::DenseNet201,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneId::ResNet50 => "resnet50",
            BackboneId::Vgg19 => "vgg19",
            BackboneId::InceptionV3 => "inceptionv3",
            BackboneId::MobileNetV2 => "mobilenetv2",
            BackboneId::DenseNet201 => "densenet201",
        }
    }

    /// Name as printed in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            BackboneId::ResNet50 => "ResNet50",
            BackboneId::Vgg19 => "VGG19",
            BackboneId::InceptionV3 => "InceptionV3",
            BackboneId::MobileNetV2 => "MobileNetV2",
            BackboneId::DenseNet201 => "DenseNet201",
        }
    }

    /// Channels of the last feature map, i.e. the pooled feature width.
    pub fn feature_width(self) -> usize {
        match self {
            BackboneId::ResNet50 => 2048,
            BackboneId::Vgg19 => 512,
            BackboneId::InceptionV3 => 2048,
            BackboneId::MobileNetV2 => 1280,
            BackboneId::DenseNet201 => 1920,
        }
    }

    /// Parameters of the headless ImageNet architecture, all frozen.
    pub fn base_param_count(self) -> u64 {
        match self {
            BackboneId::ResNet50 => 23_587_712,
            BackboneId::Vgg19 => 20_024_384,
            BackboneId::InceptionV3 => 21_802_784,
            BackboneId::MobileNetV2 => 2_257_984,
            BackboneId::DenseNet201 => 18_321_984,
        }
    }

    pub fn scaling(self) -> PixelScaling {
        match self {
            BackboneId::ResNet50 | BackboneId::Vgg19 => PixelScaling::Caffe,
            BackboneId::InceptionV3 | BackboneId::MobileNetV2 => PixelScaling::Tf,
            BackboneId::DenseNet201 => PixelScaling::Torch,
        }
    }
}

impl fmt::Display for BackboneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneId {
    type Err = BackboneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        BackboneId::ALL
            .into_iter()
            .find(|b| b.as_str() == lower)
            .ok_or_else(|| BackboneError::Unknown(s.into()))
    }
}

/// An immutable image -> pooled feature vector map.
pub trait FeatureExtractor: Send + Sync {
    fn feature_width(&self) -> usize;

    /// Input size the extractor was built for.
    fn input_size(&self) -> (u32, u32);

    /// Pooled features of one image of [`input_size`](Self::input_size).
    fn extract(&self, image: &RgbImage) -> Result<Vec<f32>, BackboneError>;

    /// Number of (frozen) parameters actually held.
    fn parameter_count(&self) -> usize;

    /// Visits every parameter in a fixed order.
    fn for_each_parameter(&self, f: &mut dyn FnMut(f32));
}

/// One convolution with "same" zero padding, followed by ReLU.
/// Weights are laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    fn validate(&self, layer: usize) -> Result<(), BackboneError> {
        let err = |reason| Err(BackboneError::Layer { layer, reason });
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return err("kernel must be odd");
        }
        if self.stride == 0 {
            return err("stride must be positive");
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return err("channel counts must be positive");
        }
        if self.weights.len() != self.out_channels * self.in_channels * self.kernel * self.kernel {
            return err("weight tensor has the wrong length");
        }
        if self.bias.len() != self.out_channels {
            return err("bias has the wrong length");
        }
        Ok(())
    }

    /// `input` is HWC with `in_channels`; returns HWC output and its size.
    fn forward(&self, input: &[f32], h: usize, w: usize) -> (Vec<f32>, usize, usize) {
        let (k, s, cin, cout) = (self.kernel, self.stride, self.in_channels, self.out_channels);
        let oh = h.div_ceil(s);
        let ow = w.div_ceil(s);
        let pad_h = ((oh - 1) * s + k).saturating_sub(h) / 2;
        let pad_w = ((ow - 1) * s + k).saturating_sub(w) / 2;
        let patch_len = cin * k * k;
        let mut patch = vec![0.0f32; patch_len];
        let mut out = vec![0.0f32; oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                // gather the receptive field as [in][ky][kx] to match the weight layout
                for ci in 0..cin {
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - pad_h as isize;
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - pad_w as isize;
                            patch[(ci * k + ky) * k + kx] = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                input[(iy as usize * w + ix as usize) * cin + ci]
                            } else {
                                0.0
                            };
                        }
                    }
                }
                let dst = &mut out[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                for (co, d) in dst.iter_mut().enumerate() {
                    let row = &self.weights[co * patch_len..(co + 1) * patch_len];
                    let acc: f32 = row.iter().zip(&patch).map(|(a, b)| a * b).sum();
                    *d = (acc + self.bias[co]).max(0.0);
                }
            }
        }
        (out, oh, ow)
    }
}

/// Conv/ReLU stack + global average pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStem {
    input_size: (u32, u32),
    scaling: PixelScaling,
    layers: Vec<ConvLayer>,
}

impl ConvStem {
    pub fn new(input_size: (u32, u32), scaling: PixelScaling, layers: Vec<ConvLayer>) -> Result<Self, BackboneError> {
        if layers.is_empty() {
            return Err(BackboneError::Layer { layer: 0, reason: "at least one layer is required" });
        }
        if layers[0].in_channels != 3 {
            return Err(BackboneError::Layer { layer: 0, reason: "first layer must take 3 channels" });
        }
        for (i, l) in layers.iter().enumerate() {
            l.validate(i)?;
            if i > 0 && layers[i - 1].out_channels != l.in_channels {
                return Err(BackboneError::Layer { layer: i, reason: "input channels do not match previous layer" });
            }
        }
        Ok(Self { input_size, scaling, layers })
    }

    /// Seeded random-feature stem for `backbone`: four 3x3 stride-2 layers
    /// (16, 32, 64, 64 channels) and a 1x1 projection to the backbone's
    /// feature width. He-uniform weights, small uniform biases, all drawn
    /// from `(master_seed, "backbone", id)`; the first layer is scaled by
    /// the pixel scaling's [`input_gain`](PixelScaling::input_gain).
    pub fn seeded(backbone: BackboneId, input_size: (u32, u32), master_seed: u64) -> Self {
        let plan = [(3, 16, 3, 2), (16, 32, 3, 2), (32, 64, 3, 2), (64, 64, 3, 2), (64, backbone.feature_width(), 1, 1)];
        let mut rng = seed::stream(master_seed, "backbone", &[backbone as u64]);
        let layers = plan
            .into_iter()
            .enumerate()
            .map(|(i, (cin, cout, k, s))| {
                let fan_in = (cin * k * k) as f64;
                let gain = if i == 0 { backbone.scaling().input_gain() } else { 1.0 };
                let limit = gain * libm::sqrt(6.0 / fan_in);
                let weights = (0..cout * cin * k * k).map(|_| seed::uniform(&mut rng, -limit, limit) as f32).collect();
                let bias = (0..cout).map(|_| seed::uniform(&mut rng, -0.1, 0.1) as f32).collect();
                ConvLayer { in_channels: cin, out_channels: cout, kernel: k, stride: s, weights, bias }
            })
            .collect();
        Self::new(input_size, backbone.scaling(), layers).expect("static plan is valid")
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn scaling(&self) -> PixelScaling {
        self.scaling
    }
}

impl FeatureExtractor for ConvStem {
    fn feature_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    fn input_size(&self) -> (u32, u32) {
        self.input_size
    }

    fn extract(&self, image: &RgbImage) -> Result<Vec<f32>, BackboneError> {
        let got = (image.width(), image.height());
        if got != self.input_size {
            return Err(BackboneError::InputSize { expected: self.input_size, got });
        }
        let (mut h, mut w) = (got.1 as usize, got.0 as usize);
        let mut act: Vec<f32> = image
            .data()
            .chunks_exact(3)
            .flat_map(|p| self.scaling.apply([p[0], p[1], p[2]]))
            .collect();
        for layer in &self.layers {
            let (next, nh, nw) = layer.forward(&act, h, w);
            act = next;
            h = nh;
            w = nw;
        }
        let c = self.feature_width();
        let mut pooled = vec![0.0f64; c];
        for px in act.chunks_exact(c) {
            for (p, &v) in pooled.iter_mut().zip(px) {
                *p += v as f64;
            }
        }
        let n = (h * w) as f64;
        Ok(pooled.into_iter().map(|v| (v / n) as f32).collect())
    }

    fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn for_each_parameter(&self, f: &mut dyn FnMut(f32)) {
        for l in &self.layers {
            l.weights.iter().chain(&l.bias).for_each(|&v| f(v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_trainable_counts() {
        let want = [34_833u64, 8_721, 34_833, 21_777, 32_657];
        for (b, w) in BackboneId::ALL.into_iter().zip(want) {
            assert_eq!((b.feature_width() as u64 + 1) * 17, w, "{b}");
        }
    }

    #[test]
    fn parse_ids() {
        assert_eq!("DenseNet201".parse::<BackboneId>().unwrap(), BackboneId::DenseNet201);
        assert!(matches!("alexnet".parse::<BackboneId>(), Err(BackboneError::Unknown(_))));
    }

    #[test]
    fn input_gain_equalizes_spans() {
        assert_eq!(PixelScaling::Tf.input_gain(), 1.0);
        assert!((PixelScaling::Caffe.input_gain() - 2.0 / 255.0).abs() < 1e-12);
        let t = PixelScaling::Torch.input_gain();
        assert!(t > 0.4 && t < 0.5, "{t}");
    }

    #[test]
    fn scaling_conventions() {
        assert_eq!(PixelScaling::Tf.apply([0, 255, 127]), [-1.0, 1.0, 127.0 / 127.5 - 1.0]);
        let c = PixelScaling::Caffe.apply([123, 117, 104]);
        assert!((c[0] - 0.061).abs() < 1e-3 && (c[2] + 0.68).abs() < 1e-3);
        let t = PixelScaling::Torch.apply([255, 0, 0]);
        assert!((t[0] - (1.0 - 0.485) / 0.229).abs() < 1e-5);
    }

    #[test]
    fn conv_same_padding_shapes() {
        let l = ConvLayer { in_channels: 1, out_channels: 1, kernel: 3, stride: 2, weights: vec![1.0; 9], bias: vec![0.0] };
        let input = vec![1.0f32; 5 * 5];
        let (out, oh, ow) = l.forward(&input, 5, 5);
        assert_eq!((oh, ow), (3, 3));
        // corner sees a 2x2 window, center a full 3x3
        assert_eq!(out[0], 4.0);
        assert_eq!(out[4], 9.0);
    }

    #[test]
    fn stem_is_deterministic_and_sized() {
        let stem = ConvStem::seeded(BackboneId::Vgg19, (32, 32), 46);
        assert_eq!(stem, ConvStem::seeded(BackboneId::Vgg19, (32, 32), 46));
        assert_ne!(stem, ConvStem::seeded(BackboneId::Vgg19, (32, 32), 47));
        let img = RgbImage::filled(32, 32, [200, 30, 30]);
        let f = stem.extract(&img).unwrap();
        assert_eq!(f.len(), 512);
        assert!(f.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert_eq!(f, stem.extract(&img).unwrap());
        assert!(matches!(stem.extract(&RgbImage::filled(8, 8, [0; 3])), Err(BackboneError::InputSize { .. })));
        let mut n = 0;
        stem.for_each_parameter(&mut |_| n += 1);
        assert_eq!(n, stem.parameter_count());
    }

    #[test]
    fn rejects_inconsistent_layers() {
        let a = ConvLayer { in_channels: 3, out_channels: 4, kernel: 1, stride: 1, weights: vec![0.0; 12], bias: vec![0.0; 4] };
        let b = ConvLayer { in_channels: 5, out_channels: 2, kernel: 1, stride: 1, weights: vec![0.0; 10], bias: vec![0.0; 2] };
        assert!(ConvStem::new((4, 4), PixelScaling::Tf, vec![a.clone(), b]).is_err());
        let even = ConvLayer { kernel: 2, weights: vec![0.0; 48], ..a };
        assert!(ConvStem::new((4, 4), PixelScaling::Tf, vec![even]).is_err());
    }
}
