//! On-disk cache of trained bundles and unary fields.
//!
//! Entries live under `<cache_dir>/<key>/rotation<r>/`, where the key hashes
//! everything that influences the unaries (training parameters and the
//! manifest text) but not the CRF settings, so configurations that differ
//! only in `lambda`, `pairwise` or `threshold` share entries.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mscrf_core::classify::{ModelBundle, UnaryField};
use mscrf_core::crf::PairwiseMode;
use mscrf_core::pipeline::TrainParams;

use crate::error::{CliError, CliResult};

const FIELD_MAGIC: &[u8; 8] = b"MSCRFUNA";

#[derive(Serialize)]
struct KeyMaterial<'a> {
    params: &'a TrainParams,
    manifest: &'a str,
}

/// Hex SHA-256 of the unary-relevant configuration.
pub fn cache_key(params: &TrainParams, manifest_text: &str) -> String {
    let mut neutral = params.clone();
    neutral.lambda = 0.0;
    neutral.threshold = 0.5;
    neutral.pairwise = PairwiseMode::Vis;
    let material = serde_json::to_vec(&KeyMaterial {
        params: &neutral,
        manifest: manifest_text,
    })
    .expect("cache key serializes");
    let digest = Sha256::digest(&material);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct UnaryCache {
    dir: PathBuf,
}

impl UnaryCache {
    pub fn new(root: &Path, key: &str, rotation: usize) -> CliResult<Self> {
        let dir = root.join(key).join(format!("rotation{rotation}"));
        fs::create_dir_all(dir.join("unary")).map_err(|e| CliError::io(&dir, e))?;
        Ok(UnaryCache { dir })
    }

    fn bundle_path(&self) -> PathBuf {
        self.dir.join("bundle.bin")
    }

    fn field_path(&self, image_id: &str) -> PathBuf {
        self.dir.join("unary").join(format!("{image_id}.bin"))
    }

    pub fn load_bundle(&self) -> Option<ModelBundle> {
        let path = self.bundle_path();
        path.exists().then(|| ModelBundle::load(&path).ok()).flatten()
    }

    pub fn store_bundle(&self, bundle: &ModelBundle) -> CliResult<()> {
        Ok(bundle.save(&self.bundle_path())?)
    }

    pub fn load_field(&self, image_id: &str) -> Option<UnaryField> {
        let bytes = fs::read(self.field_path(image_id)).ok()?;
        decode_field(&bytes)
    }

    pub fn store_field(&self, image_id: &str, field: &UnaryField) -> CliResult<()> {
        let path = self.field_path(image_id);
        fs::write(&path, encode_field(field)).map_err(|e| CliError::io(&path, e))
    }
}

/// Raw little-endian layout: magic, width, height, classes, background
/// flag, then the probabilities.
pub fn encode_field(field: &UnaryField) -> Vec<u8> {
    let mut out = Vec::with_capacity(33 + 8 * field.probs.len());
    out.extend_from_slice(FIELD_MAGIC);
    for v in [field.width, field.height, field.num_classes] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.push(u8::from(field.has_background));
    for p in &field.probs {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Option<UnaryField> {
    if bytes.len() < 33 || &bytes[..8] != FIELD_MAGIC {
        return None;
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let (width, height, classes) = (word(0), word(1), word(2));
    let has_background = bytes[32] == 1;
    let probs: Vec<f64> = bytes[33..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut field = UnaryField::new(width, height, classes + usize::from(has_background), probs).ok()?;
    field.num_classes = classes;
    field.has_background = has_background;
    Some(field)
}
