//! `augment` stage: expand the training (and optionally validation)
//! split into `augmented/<split>/<class>/` plus a provenance table.
//!
//! Provenance format, one tab between fields (shown here as spaces):
//!
//! ```text
//! #jutepest-provenance  1
//! #digest  <hex>
//! file  split  class_index  source  iteration  index  angle  dx  dy  zoom  flip_h  flip_v
//! ```
//!
//! `file` is relative to the workdir; floats use the shortest
//! representation that parses back to the same value.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use jutepest_core::augment::{self, AugmentationConfig, Provenance, TransformParams};
use jutepest_core::split::Split;
use jutepest_core::RgbImage;
use rayon::prelude::*;

use crate::config::{PipelineConfig, Stage};
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::imaging;
use crate::ingest;
use crate::workdir::{reset_dir, Workdir};

const MAGIC: &str = "#jutepest-provenance\t1";
const COLUMNS: &str = "file\tsplit\tclass_index\tsource\titeration\tindex\tangle\tdx\tdy\tzoom\tflip_h\tflip_v";

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    /// Relative to the workdir, `/`-separated.
    pub file: String,
    pub split: Split,
    pub class_index: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProvenanceTable {
    pub digest: Option<String>,
    pub records: Vec<AugmentedRecord>,
}

fn extension(cfg: &AugmentationConfig) -> Result<&'static str> {
    match cfg.save_format.to_ascii_lowercase().as_str() {
        "jpg" | "jpeg" => Ok("jpg"),
        "png" => Ok("png"),
        other => Err(Error::Config(format!("unsupported augmentation save format `{other}` (jpg or png)"))),
    }
}

/// File name for one augmented sample of `stem`.
pub fn augmented_name(stem: &str, iteration: u32, index: u32, ext: &str) -> String {
    format!("{stem}__{iteration:02}_{index:02}.{ext}")
}

/// Writes every augmented image of one source into `dir`, returning the
/// file paths with their provenance in generation order.
pub fn write_expansion(
    source_key: &str,
    image: &RgbImage,
    cfg: &AugmentationConfig,
    seed: u64,
    dir: &Path,
    stem: &str,
) -> Result<Vec<(PathBuf, Provenance)>> {
    cfg.validate()?;
    let ext = extension(cfg)?;
    augment::expand_source(source_key, image, cfg, seed)
        .map(|(prov, img)| {
            let path = dir.join(augmented_name(stem, prov.iteration, prov.index, ext));
            match ext {
                "png" => imaging::save_png(&img, &path)?,
                _ => imaging::save_jpeg(&img, &path)?,
            }
            Ok((path, prov))
        })
        .collect()
}

fn strip_image_ext(name: &str) -> &str {
    let lower = name.to_ascii_lowercase();
    for ext in [".jpg", ".jpeg"] {
        if lower.ends_with(ext) {
            return &name[..name.len() - ext.len()];
        }
    }
    name
}

/// Splits that the configuration augments.
pub fn augmented_splits(cfg: &PipelineConfig) -> Vec<Split> {
    if cfg.augmentation.apply_to_validation {
        vec![Split::Train, Split::Validation]
    } else {
        vec![Split::Train]
    }
}

pub fn run(cfg: &PipelineConfig, wd: &Workdir, manifest: &DatasetManifest) -> Result<ProvenanceTable> {
    let params = &cfg.augmentation.params;
    params.validate()?;
    extension(params)?;
    reset_dir(&wd.root().join("augmented"))?;
    let mut records = Vec::new();
    for split in augmented_splits(cfg) {
        let out_root = wd.augmented_dir(split);
        let sources: Vec<_> = manifest.in_split(split).collect();
        let per_source: Vec<Vec<AugmentedRecord>> = sources
            .par_iter()
            .map(|s| {
                let img = imaging::load_rgb(&ingest::processed_path(wd, &s.path))?;
                let rel = strip_image_ext(&ingest::processed_name(&s.path)).to_string();
                let (parent, stem) = match rel.rsplit_once('/') {
                    Some((p, n)) => (out_root.join(p), n.to_string()),
                    None => (out_root.clone(), rel.clone()),
                };
                let written = write_expansion(&s.path, &img, params, cfg.seed, &parent, &stem)?;
                Ok(written
                    .into_iter()
                    .map(|(path, provenance)| AugmentedRecord {
                        file: relative(wd.root(), &path),
                        split,
                        class_index: s.class_index,
                        provenance,
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        records.extend(per_source.into_iter().flatten());
    }
    let table = ProvenanceTable { digest: Some(cfg.digest(Stage::Augment)), records };
    imaging::write_file(&wd.provenance(), render(&table)?.as_bytes())?;
    log::info!("wrote {} augmented images", table.records.len());
    Ok(table)
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

pub fn render(t: &ProvenanceTable) -> Result<String> {
    let mut out = format!("{MAGIC}\n");
    if let Some(d) = &t.digest {
        writeln!(out, "#digest\t{d}").unwrap();
    }
    writeln!(out, "{COLUMNS}").unwrap();
    for r in &t.records {
        if r.file.contains(['\t', '\n']) || r.provenance.source.contains(['\t', '\n']) {
            return Err(Error::Dataset(format!("path `{}` contains a tab or newline", r.file.escape_debug())));
        }
        let p = &r.provenance.params;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\t{}",
            r.file,
            r.split,
            r.class_index,
            r.provenance.source,
            r.provenance.iteration,
            r.provenance.index,
            p.angle,
            p.dx,
            p.dy,
            p.zoom,
            p.flip_h,
            p.flip_v
        )
        .unwrap();
    }
    Ok(out)
}

pub fn parse(text: &str, path: &Path) -> Result<ProvenanceTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let err = |line, m: String| Error::parse(path, line, m);
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(err(1, "not a provenance file (bad magic or version)".into())),
    }
    let mut table = ProvenanceTable::default();
    let mut columns_seen = false;
    for (n, line) in lines {
        if let Some(d) = line.strip_prefix("#digest\t") {
            table.digest = Some(d.to_string());
            continue;
        }
        if !columns_seen {
            if line != COLUMNS {
                return Err(err(n, "expected the column header".into()));
            }
            columns_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 12 {
            return Err(err(n, format!("expected 12 fields, found {}", f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| err(n, format!("field {}: {e}", i + 1)));
        let int = |i: usize| f[i].parse::<u64>().map_err(|e| err(n, format!("field {}: {e}", i + 1)));
        let flag = |i: usize| f[i].parse::<bool>().map_err(|e| err(n, format!("field {}: {e}", i + 1)));
        let split = Split::parse(f[1]).ok_or_else(|| err(n, format!("unknown split `{}`", f[1])))?;
        table.records.push(AugmentedRecord {
            file: f[0].to_string(),
            split,
            class_index: int(2)? as usize,
            provenance: Provenance {
                source: f[3].to_string(),
                iteration: int(4)? as u32,
                index: int(5)? as u32,
                params: TransformParams { angle: num(6)?, dx: num(7)?, dy: num(8)?, zoom: num(9)?, flip_h: flag(10)?, flip_v: flag(11)? },
            },
        });
    }
    if !columns_seen {
        return Err(err(text.lines().count(), "missing column header".into()));
    }
    Ok(table)
}

pub fn load(path: &Path) -> Result<ProvenanceTable> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse(&text, path)
}
