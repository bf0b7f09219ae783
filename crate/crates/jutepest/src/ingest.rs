//! `ingest` stage: scan the dataset tree, preprocess every image and
//! write the results under `processed/`.

use std::collections::HashSet;
use std::path::PathBuf;

use jutepest_core::preprocess::{self, Note};
use rayon::prelude::*;

use crate::config::{PipelineConfig, Stage};
use crate::dataset::{self, DatasetManifest};
use crate::error::{Error, Result};
use crate::imaging;
use crate::workdir::{reset_dir, Workdir};

/// Path of a sample's processed image relative to `processed/`. The
/// source's relative path is kept; non-JPEG names get `.jpg` appended.
pub fn processed_name(relative: &str) -> String {
    let lower = relative.to_ascii_lowercase();
    if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        relative.to_string()
    } else {
        format!("{relative}.jpg")
    }
}

pub fn processed_path(wd: &Workdir, relative: &str) -> PathBuf {
    wd.processed_dir().join(processed_name(relative))
}

pub fn run(cfg: &PipelineConfig, wd: &Workdir) -> Result<DatasetManifest> {
    let mut manifest = dataset::scan_source_tree(&cfg.dataset_root, &cfg.catalog)?;
    if manifest.samples.is_empty() {
        return Err(Error::Dataset(format!("no decodable images under {}", cfg.dataset_root.display())));
    }
    let mut seen = HashSet::new();
    for s in &manifest.samples {
        let name = processed_name(&s.path).to_lowercase();
        if !seen.insert(name) {
            return Err(Error::Dataset(format!("two sources map to processed image {}", processed_name(&s.path))));
        }
    }
    reset_dir(&wd.processed_dir())?;
    let notes: Vec<Vec<String>> = manifest
        .samples
        .par_iter()
        .map(|s| {
            let src = cfg.dataset_root.join(&s.path);
            let raw = imaging::decode(&src)?;
            let out = preprocess::preprocess(&raw, &cfg.preprocess)?;
            imaging::save_jpeg(&out.image, &processed_path(wd, &s.path))?;
            Ok(out
                .notes
                .iter()
                .map(|n| match n {
                    Note::EmptyForegroundMask => format!("{}: empty foreground mask, background kept", s.path),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let noted = notes.iter().filter(|n| !n.is_empty()).count();
    if noted > 0 {
        log::info!("{noted} images had no separable background and were kept as-is (listed in the manifest)");
    }
    for n in notes.into_iter().flatten() {
        log::debug!("{n}");
        manifest.warnings.push(n);
    }
    manifest.digest = Some(cfg.digest(Stage::Ingest));
    dataset::persist_manifest(&manifest, &wd.manifest())?;
    log::info!("ingested {} images ({} skipped) into {}", manifest.samples.len(), manifest.skipped.len(), wd.processed_dir().display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_preserved() {
        assert_eq!(processed_name("Mealybug/a.JPG"), "Mealybug/a.JPG");
        assert_eq!(processed_name("Mealybug/sub/a.png"), "Mealybug/sub/a.png.jpg");
    }
}
