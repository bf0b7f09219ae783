#![allow(dead_code)]

use std::path::{Path, PathBuf};

use jutepest::config::PipelineConfig;
use jutepest_core::backbone::BackboneId;
use jutepest_core::RgbImage;

pub const TOY_CLASSES: [(&str, [u8; 3]); 3] = [("red", [200, 30, 30]), ("green", [30, 180, 40]), ("blue", [30, 40, 200])];

/// Three classes of solid-color images with small per-image jitter.
pub fn toy_dataset(root: &Path, per_class: usize) {
    for (ci, (name, rgb)) in TOY_CLASSES.iter().enumerate() {
        for i in 0..per_class {
            let j = ((i * 7 + ci * 3) % 21) as i32 - 10;
            let c = rgb.map(|v| (v as i32 + j).clamp(0, 255) as u8);
            let img = RgbImage::filled(64, 48, c);
            jutepest::imaging::save_png(&img, &root.join(name).join(format!("{i:02}.png"))).unwrap();
        }
    }
}

/// Small but complete configuration for the toy dataset.
pub fn toy_config(data: &Path, work: &Path, backbones: &[BackboneId]) -> PipelineConfig {
    let mut cfg = PipelineConfig { dataset_root: data.into(), workdir: work.into(), backbones: backbones.to_vec(), ..Default::default() };
    cfg.training.epochs = 5;
    cfg.augmentation.params.iterations = 2;
    cfg.augmentation.params.samples_per_iteration = 2;
    cfg
}

pub fn write_config(cfg: &PipelineConfig, path: &Path) -> PathBuf {
    std::fs::write(path, cfg.to_toml()).unwrap();
    path.to_path_buf()
}
