//! Geometric augmentation: random flip, rotation, shift and zoom followed
//! by a resize to the network input size.
//!
//! Transforms are applied in a fixed order, flip -> rotate -> shift ->
//! zoom -> resize. Rotation, shift and zoom are composed into one inverse
//! affine map sampled bilinearly at the source resolution, so identity
//! parameters reproduce the source exactly before the final resize.

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{self, quantize, FillMode, RgbImage};
use crate::seed;

/// Network input size.
pub const INPUT_SIZE: (u32, u32) = (224, 224);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("augmentation range `{0}` must be finite and non-negative")]
    Range(&'static str),
    #[error("zoom range must be below 1, got {0}")]
    Zoom(f64),
    #[error("`{0}` must be at least 1")]
    Count(&'static str),
    #[error("no source images to augment")]
    NoSources,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub resize_to: (u32, u32),
    /// Degrees.
    pub rotation_range: f64,
    /// Fraction of the width.
    pub width_shift_range: f64,
    /// Fraction of the height.
    pub height_shift_range: f64,
    pub zoom_range: f64,
    pub vertical_flip: bool,
    pub horizontal_flip: bool,
    pub iterations: u32,
    pub samples_per_iteration: u32,
    pub fill_mode: FillMode,
    pub save_format: String,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            resize_to: INPUT_SIZE,
            rotation_range: 30.0,
            width_shift_range: 0.2,
            height_shift_range: 0.2,
            zoom_range: 0.2,
            vertical_flip: true,
            horizontal_flip: true,
            iterations: 20,
            samples_per_iteration: 16,
            fill_mode: FillMode::Nearest,
            save_format: String::from("jpg"),
        }
    }
}

impl AugmentationConfig {
    /// No randomness at all: every output is the resized source.
    pub fn identity(iterations: u32, samples_per_iteration: u32) -> Self {
        Self {
            rotation_range: 0.0,
            width_shift_range: 0.0,
            height_shift_range: 0.0,
            zoom_range: 0.0,
            vertical_flip: false,
            horizontal_flip: false,
            iterations,
            samples_per_iteration,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, v) in [
            ("rotation_range", self.rotation_range),
            ("width_shift_range", self.width_shift_range),
            ("height_shift_range", self.height_shift_range),
            ("zoom_range", self.zoom_range),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AugmentError::Range(name));
            }
        }
        if self.zoom_range >= 1.0 {
            return Err(AugmentError::Zoom(self.zoom_range));
        }
        if self.iterations == 0 {
            return Err(AugmentError::Count("iterations"));
        }
        if self.samples_per_iteration == 0 {
            return Err(AugmentError::Count("samples_per_iteration"));
        }
        if self.resize_to.0 == 0 || self.resize_to.1 == 0 {
            return Err(AugmentError::Count("resize_to"));
        }
        Ok(())
    }

    /// Augmented images produced per source.
    pub fn per_source(&self) -> usize {
        self.iterations as usize * self.samples_per_iteration as usize
    }
}

/// One draw of transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    /// Counter-clockwise, degrees.
    pub angle: f64,
    /// Shift as a fraction of the width; positive moves content right.
    pub dx: f64,
    /// Shift as a fraction of the height; positive moves content down.
    pub dy: f64,
    /// Magnification about the center; above 1 zooms in.
    pub zoom: f64,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl TransformParams {
    pub const IDENTITY: Self = Self { angle: 0.0, dx: 0.0, dy: 0.0, zoom: 1.0, flip_h: false, flip_v: false };

    fn is_affine_identity(&self) -> bool {
        self.angle == 0.0 && self.dx == 0.0 && self.dy == 0.0 && self.zoom == 1.0
    }
}

/// Draws parameters uniformly within the configured ranges; flips are fair
/// coins when enabled. The stream advances by the same amount whatever the
/// config, so disabling one range does not shift the others' draws.
pub fn sample_transform<R: RngCore>(config: &AugmentationConfig, rng: &mut R) -> TransformParams {
    let mut sym = |range: f64| {
        let v = seed::uniform(rng, -range, range);
        if range > 0.0 {
            v
        } else {
            0.0
        }
    };
    let angle = sym(config.rotation_range);
    let dx = sym(config.width_shift_range);
    let dy = sym(config.height_shift_range);
    let zoom = 1.0 + sym(config.zoom_range);
    let flip_h = rng.next_u32() & 1 == 1 && config.horizontal_flip;
    let flip_v = rng.next_u32() & 1 == 1 && config.vertical_flip;
    TransformParams { angle, dx, dy, zoom, flip_h, flip_v }
}

/// Applies `params` and resizes to `config.resize_to`.
pub fn apply_transform(img: &RgbImage, params: &TransformParams, config: &AugmentationConfig) -> RgbImage {
    let mut work = img.clone();
    if params.flip_h {
        work = work.flip_horizontal();
    }
    if params.flip_v {
        work = work.flip_vertical();
    }
    if !params.is_affine_identity() {
        work = warp(&work, params, config.fill_mode);
    }
    let (w, h) = config.resize_to;
    raster::resize(&work, w, h).expect("validated resize target")
}

/// Inverse-maps every output pixel through zoom, shift and rotation.
fn warp(img: &RgbImage, p: &TransformParams, fill: FillMode) -> RgbImage {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let theta = p.angle.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let (tx, ty) = (p.dx * w, p.dy * h);
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        // undo zoom
        let zx = cx + (x as f64 - cx) / p.zoom;
        let zy = cy + (y as f64 - cy) / p.zoom;
        // undo shift
        let (sx, sy) = (zx - tx - cx, zy - ty - cy);
        // undo rotation; image y points down, so a counter-clockwise turn on
        // screen is a clockwise one in these coordinates
        let rx = cos * sx - sin * sy;
        let ry = sin * sx + cos * sy;
        img.sample(cx + rx, cy + ry, fill).map(quantize)
    })
}

/// Where an augmented image came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// 1-based.
    pub iteration: u32,
    /// 0-based within the iteration.
    pub index: u32,
    pub params: TransformParams,
}

/// Stream for one augmented sample. Keyed by the source identifier, so
/// sources are independent of each other and of their order.
pub fn sample_stream(master_seed: u64, source_key: &str, iteration: u32, index: u32) -> rand_chacha::ChaCha8Rng {
    seed::stream(
        master_seed,
        "augment",
        &[seed::hash_bytes(source_key.as_bytes()), iteration as u64, index as u64],
    )
}

/// Lazily produces the `iterations x samples_per_iteration` augmented
/// images of one source, in (iteration, index) order.
pub fn expand_source<'a>(
    source_key: &'a str,
    image: &'a RgbImage,
    config: &'a AugmentationConfig,
    master_seed: u64,
) -> impl Iterator<Item = (Provenance, RgbImage)> + 'a {
    (1..=config.iterations).flat_map(move |iteration| {
        (0..config.samples_per_iteration).map(move |index| {
            let params = sample_transform(config, &mut sample_stream(master_seed, source_key, iteration, index));
            let out = apply_transform(image, &params, config);
            (Provenance { source: source_key.into(), iteration, index, params }, out)
        })
    })
}

/// Expands every source; output order is source order, then iteration,
/// then index. Originals are not included.
pub fn expand_set(
    sources: &[(String, RgbImage)],
    config: &AugmentationConfig,
    master_seed: u64,
) -> Result<Vec<(Provenance, RgbImage)>, AugmentError> {
    config.validate()?;
    if sources.is_empty() {
        return Err(AugmentError::NoSources);
    }
    Ok(sources
        .iter()
        .flat_map(|(key, img)| expand_source(key, img, config, master_seed))
        .collect())
}
