//! Versioned checkpoint file for a trained head.
//!
//! Layout: the line `jutepest-checkpoint 1\n`, an 8-byte little-endian
//! header length, a JSON header, the head weights (class-major) then
//! biases as little-endian f64, and a trailing SHA-256 of everything
//! before it.

use std::fs;
use std::path::Path;

use jutepest_core::backbone::{BackboneId, ConvStem};
use jutepest_core::head::DenseHead;
use jutepest_core::model::{Model, ModelSpec};
use jutepest_core::ClassCatalog;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::write_file;
use crate::weights::{rebuild_extractor, split_header, verified_payload, WeightOrigin};

const MAGIC: &[u8] = b"jutepest-checkpoint 1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    backbone: BackboneId,
    spec: ModelSpec,
    weights: WeightOrigin,
    catalog: ClassCatalog,
    config_digest: String,
    best_epoch: u32,
    features: usize,
    classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub weights: WeightOrigin,
    pub catalog: ClassCatalog,
    pub config_digest: String,
    pub best_epoch: u32,
    pub head: DenseHead,
}

impl Checkpoint {
    pub fn backbone(&self) -> BackboneId {
        self.spec.backbone.id
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = Header {
            backbone: self.backbone(),
            spec: self.spec,
            weights: self.weights.clone(),
            catalog: self.catalog.clone(),
            config_digest: self.config_digest.clone(),
            best_epoch: self.best_epoch,
            features: self.head.features(),
            classes: self.head.classes(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.head.parameters() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::Integrity { path: path.to_path_buf(), message: m };
        let payload = verified_payload(bytes, MAGIC, path)?;
        let (json, blob) = split_header(payload, path)?;
        let h: Header = serde_json::from_slice(json).map_err(|e| bad(format!("bad header: {e}")))?;
        let n = (h.features + 1) * h.classes;
        if blob.len() != n * 8 {
            return Err(bad(format!("expected {n} head parameters, found {} bytes", blob.len())));
        }
        let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let (w, b) = values.split_at(h.features * h.classes);
        let head = DenseHead::from_parts(h.features, h.classes, w.to_vec(), b.to_vec()).map_err(|e| bad(e.to_string()))?;
        if h.spec.backbone.id != h.backbone || h.spec.head.num_classes != h.catalog.count() || h.classes != h.catalog.count() {
            return Err(bad("header fields disagree".into()));
        }
        Ok(Self { spec: h.spec, weights: h.weights, catalog: h.catalog, config_digest: h.config_digest, best_epoch: h.best_epoch, head })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Self::decode(&bytes, path)
    }

    /// Reassembles the full model (frozen extractor plus trained head).
    pub fn model(&self, weights_dir: Option<&Path>) -> Result<Model<ConvStem>> {
        let stem = rebuild_extractor(&self.weights, self.backbone(), self.spec.input_size, weights_dir)?;
        Ok(Model::with_head(self.spec, stem, self.head.clone())?)
    }
}
