use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::slr::LinearClassifier;
use crate::channels::{ChannelPca, ChannelSet};
use crate::crf::PairwiseMode;
use crate::descriptors::DescriptorSpec;
use crate::encoding::{DescriptorPca, GmmCodebook};
use crate::error::{Error, Result};
use crate::imageio::Mode;

pub const BUNDLE_MAGIC: &[u8; 8] = b"MSCRFMDL";
pub const BUNDLE_VERSION: u32 = 1;

/// Everything needed to turn one descriptor stream into class posteriors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamModel {
    pub descriptor: DescriptorSpec,
    pub pca: DescriptorPca,
    pub gmm: GmmCodebook,
    pub classifier: LinearClassifier,
    pub min_posterior: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub channel_pca: u64,
    pub descriptor_sample: u64,
    pub gmm: u64,
}

/// A trained model: optional channel PCA plus one [`StreamModel`] per
/// late-fused descriptor stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub label_names: Vec<String>,
    pub mode: Mode,
    pub channel_pca: Option<ChannelPca>,
    pub streams: Vec<StreamModel>,
    pub threshold: f64,
    pub pairwise: PairwiseMode,
    pub lambda: f64,
    pub seeds: Seeds,
    pub descriptor_sample_budget: usize,
}

impl ModelBundle {
    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn needs_nir(&self) -> bool {
        self.streams.iter().any(|s| s.descriptor.channels.needs_nir())
    }

    /// Every channel any stream reads, in first-use order.
    pub fn channels(&self) -> Vec<ChannelSet> {
        self.streams.iter().map(|s| s.descriptor.channels.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::Bundle("bundle has no descriptor streams".into()));
        }
        for s in &self.streams {
            if s.descriptor.channels.needs_pca() && self.channel_pca.is_none() {
                return Err(Error::Bundle(format!(
                    "stream {} needs the channel PCA, which is missing",
                    s.descriptor.name()
                )));
            }
            if s.classifier.num_classes() != self.num_classes() {
                return Err(Error::Bundle(format!(
                    "stream {} has {} heads for {} labels",
                    s.descriptor.name(),
                    s.classifier.num_classes(),
                    self.num_classes()
                )));
            }
            if s.pca.input_dim != s.descriptor.dim() || s.pca.output_dim() != s.gmm.dim() {
                return Err(Error::Bundle(format!(
                    "stream {} has inconsistent projection dimensions",
                    s.descriptor.name()
                )));
            }
        }
        Ok(())
    }

    /// Header (magic, version, payload length) followed by a bincode payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = bincode::serialize(self).map_err(|e| Error::Bundle(e.to_string()))?;
        let mut out = Vec::with_capacity(payload.len() + 20);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != BUNDLE_MAGIC {
            return Err(Error::Bundle("not a model bundle".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(Error::Bundle(format!(
                "unsupported bundle version {version} (expected {BUNDLE_VERSION})"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() != 20 + len {
            return Err(Error::Bundle("truncated bundle payload".into()));
        }
        let bundle: ModelBundle =
            bincode::deserialize(&bytes[20..]).map_err(|e| Error::Bundle(e.to_string()))?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
