//! Backbone weight files and extractor construction.
//!
//! File layout: the line `jutepest-stem 1\n`, an 8-byte little-endian
//! header length, a JSON header (backbone id, input size, pixel scaling,
//! layer shapes), every layer's weights then biases as little-endian f32,
//! and a trailing SHA-256 of everything before it.

use std::fs;
use std::path::{Path, PathBuf};

use jutepest_core::backbone::{BackboneId, ConvLayer, ConvStem, PixelScaling};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, PipelineConfig, WeightSource};
use crate::error::{Error, Result};
use crate::imaging::write_file;

const MAGIC: &[u8] = b"jutepest-stem 1\n";

#[derive(Serialize, Deserialize)]
struct LayerShape {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
}

#[derive(Serialize, Deserialize)]
struct StemHeader {
    backbone: BackboneId,
    input_size: (u32, u32),
    scaling: PixelScaling,
    layers: Vec<LayerShape>,
}

/// Where a model's frozen weights came from; stored in checkpoints so the
/// extractor can be rebuilt exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightOrigin {
    Surrogate { seed: u64 },
    File { sha256: String },
}

pub fn stem_path(dir: &Path, backbone: BackboneId) -> PathBuf {
    dir.join(format!("{}.stem", backbone.as_str()))
}

pub fn encode_stem(backbone: BackboneId, stem: &ConvStem) -> Vec<u8> {
    use jutepest_core::backbone::FeatureExtractor;
    let header = StemHeader {
        backbone,
        input_size: stem.input_size(),
        scaling: stem.scaling(),
        layers: stem
            .layers()
            .iter()
            .map(|l| LayerShape { in_channels: l.in_channels, out_channels: l.out_channels, kernel: l.kernel, stride: l.stride })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for l in stem.layers() {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_stem(backbone: BackboneId, stem: &ConvStem, path: &Path) -> Result<()> {
    write_file(path, &encode_stem(backbone, stem))
}

/// Verifies the trailing digest and splits off the payload.
pub(crate) fn verified_payload<'a>(bytes: &'a [u8], magic: &[u8], path: &Path) -> Result<&'a [u8]> {
    let bad = |m: &str| Error::Integrity { path: path.to_path_buf(), message: m.into() };
    if bytes.len() < magic.len() + 8 + 32 {
        return Err(bad("file is truncated"));
    }
    if !bytes.starts_with(magic) {
        let line = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
        return Err(bad(&format!("unrecognized format or version `{}`", String::from_utf8_lossy(line))));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(bad("checksum mismatch (file truncated or modified)"));
    }
    Ok(&payload[magic.len()..])
}

/// Reads the length-prefixed JSON header; returns it and the rest.
pub(crate) fn split_header<'a>(payload: &'a [u8], path: &Path) -> Result<(&'a [u8], &'a [u8])> {
    let bad = |m: &str| Error::Integrity { path: path.to_path_buf(), message: m.into() };
    let len = u64::from_le_bytes(payload[..8].try_into().unwrap()) as usize;
    let rest = &payload[8..];
    if len > rest.len() {
        return Err(bad("header length exceeds file"));
    }
    Ok(rest.split_at(len))
}

pub fn decode_stem(bytes: &[u8], path: &Path) -> Result<(BackboneId, ConvStem)> {
    let bad = |m: String| Error::Integrity { path: path.to_path_buf(), message: m };
    let payload = verified_payload(bytes, MAGIC, path)?;
    let (json, mut blob) = split_header(payload, path)?;
    let header: StemHeader = serde_json::from_slice(json).map_err(|e| bad(format!("bad header: {e}")))?;
    let mut take = |n: usize| -> Result<Vec<f32>> {
        if blob.len() < n * 4 {
            return Err(bad("weight blob shorter than declared layers".into()));
        }
        let (head, tail) = blob.split_at(n * 4);
        blob = tail;
        Ok(head.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let mut layers = Vec::new();
    for s in &header.layers {
        let weights = take(s.out_channels * s.in_channels * s.kernel * s.kernel)?;
        let bias = take(s.out_channels)?;
        layers.push(ConvLayer { in_channels: s.in_channels, out_channels: s.out_channels, kernel: s.kernel, stride: s.stride, weights, bias });
    }
    if !blob.is_empty() {
        return Err(bad("trailing bytes after weight blob".into()));
    }
    let stem = ConvStem::new(header.input_size, header.scaling, layers)?;
    Ok((header.backbone, stem))
}

pub fn load_stem(path: &Path) -> Result<(BackboneId, ConvStem)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_stem(&bytes, path)
}

/// Builds the frozen extractor for `backbone` per the configured source.
pub fn resolve_extractor(cfg: &PipelineConfig, backbone: BackboneId, input_size: (u32, u32)) -> Result<(ConvStem, WeightOrigin)> {
    match cfg.weights {
        WeightSource::Surrogate => {
            Ok((ConvStem::seeded(backbone, input_size, cfg.seed), WeightOrigin::Surrogate { seed: cfg.seed }))
        }
        WeightSource::Pretrained => {
            let dir = cfg.weights_dir().ok_or_else(|| Error::MissingWeights {
                backbone: backbone.to_string(),
                path: PathBuf::from(format!("${}", crate::config::WEIGHTS_DIR_ENV)),
            })?;
            let path = stem_path(&dir, backbone);
            if !path.is_file() {
                return Err(Error::MissingWeights { backbone: backbone.to_string(), path });
            }
            let stem = load_checked(&path, backbone, input_size)?;
            let sha = hex(&Sha256::digest(fs::read(&path).map_err(Error::io(&path))?));
            Ok((stem, WeightOrigin::File { sha256: sha }))
        }
    }
}

fn load_checked(path: &Path, backbone: BackboneId, input_size: (u32, u32)) -> Result<ConvStem> {
    use jutepest_core::backbone::FeatureExtractor;
    let (id, stem) = load_stem(path)?;
    if id != backbone {
        return Err(Error::Integrity { path: path.into(), message: format!("holds {id} weights, expected {backbone}") });
    }
    if stem.feature_width() != backbone.feature_width() || stem.input_size() != input_size {
        return Err(Error::Integrity { path: path.into(), message: "feature width or input size does not match the backbone".into() });
    }
    Ok(stem)
}

/// Rebuilds the extractor a checkpoint was trained with.
pub fn rebuild_extractor(
    origin: &WeightOrigin,
    backbone: BackboneId,
    input_size: (u32, u32),
    weights_dir: Option<&Path>,
) -> Result<ConvStem> {
    match origin {
        WeightOrigin::Surrogate { seed } => Ok(ConvStem::seeded(backbone, input_size, *seed)),
        WeightOrigin::File { sha256 } => {
            let dir = weights_dir.ok_or_else(|| Error::MissingWeights {
                backbone: backbone.to_string(),
                path: PathBuf::from(format!("${}", crate::config::WEIGHTS_DIR_ENV)),
            })?;
            let path = stem_path(dir, backbone);
            let bytes = fs::read(&path).map_err(|_| Error::MissingWeights { backbone: backbone.to_string(), path: path.clone() })?;
            if &hex(&Sha256::digest(&bytes)) != sha256 {
                return Err(Error::Integrity { path, message: "weights differ from the ones used in training".into() });
            }
            load_checked(&path, backbone, input_size)
        }
    }
}
