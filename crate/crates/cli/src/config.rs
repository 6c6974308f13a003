use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mscrf_core::classify::SlrParams;
use mscrf_core::crf::PairwiseMode;
use mscrf_core::descriptors::{DescriptorSpec, NAMED_VARIANTS};
use mscrf_core::encoding::{GmmParams, DEFAULT_COMPONENTS, DEFAULT_MIN_POSTERIOR, PROJECTED_DIM};
use mscrf_core::imageio::NUM_FOLDS;
use mscrf_core::pipeline::TrainParams;

use crate::error::{CliError, CliResult};

/// Which folds play which role when training a single model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<u8>,
    #[serde(default)]
    pub validation: Vec<u8>,
    #[serde(default)]
    pub test: Vec<u8>,
}

impl Default for FoldSplit {
    fn default() -> Self {
        FoldSplit {
            train: (0..NUM_FOLDS).collect(),
            validation: Vec::new(),
            test: Vec::new(),
        }
    }
}

/// Lambda sweep on the validation fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub lambdas: Vec<f64>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            lambdas: vec![0.0, 1.0, 2.5, 5.0, 10.0, 20.0],
        }
    }
}

fn default_descriptor() -> String {
    "SIFT_rgbn".into()
}
fn default_pairwise() -> PairwiseMode {
    PairwiseMode::VisNir
}
fn default_lambda() -> f64 {
    5.0
}
fn default_threshold() -> f64 {
    0.5
}
fn default_components() -> usize {
    DEFAULT_COMPONENTS
}
fn default_pca_dim() -> usize {
    PROJECTED_DIM
}
fn default_descriptor_budget() -> usize {
    500_000
}
fn default_channel_budget() -> usize {
    1_000_000
}
fn default_min_posterior() -> f64 {
    DEFAULT_MIN_POSTERIOR
}
fn default_radii() -> Vec<usize> {
    vec![1, 2, 4, 6, 8, 10, 15, 20]
}

/// One experiment: dataset, descriptor configuration and CRF settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset manifest, relative to the config file.
    pub manifest: PathBuf,
    /// A named variant such as `SIFT_rgbn`, a late-fused pair such as
    /// `COL_rgb+SIFT_l`, or any `KIND_channels` combination.
    #[serde(default = "default_descriptor")]
    pub descriptor: String,
    #[serde(default = "default_pairwise")]
    pub pairwise: PairwiseMode,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split: FoldSplit,
    #[serde(default = "default_components")]
    pub gmm_components: usize,
    #[serde(default = "default_pca_dim")]
    pub pca_dim: usize,
    #[serde(default)]
    pub slr: SlrParams,
    #[serde(default = "default_descriptor_budget")]
    pub descriptor_sample_budget: usize,
    #[serde(default = "default_channel_budget")]
    pub channel_sample_budget: usize,
    #[serde(default)]
    pub max_training_patches: Option<usize>,
    #[serde(default = "default_min_posterior")]
    pub min_posterior: f64,
    #[serde(default = "default_radii")]
    pub trimap_radii: Vec<usize>,
    /// Unary-field cache; disabled when absent.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub tune: Option<TuneConfig>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            manifest: manifest.into(),
            descriptor: default_descriptor(),
            pairwise: default_pairwise(),
            lambda: default_lambda(),
            threshold: default_threshold(),
            seed: 0,
            split: FoldSplit::default(),
            gmm_components: default_components(),
            pca_dim: default_pca_dim(),
            slr: SlrParams::default(),
            descriptor_sample_budget: default_descriptor_budget(),
            channel_sample_budget: default_channel_budget(),
            max_training_patches: None,
            min_posterior: default_min_posterior(),
            trimap_radii: default_radii(),
            cache_dir: None,
            tune: None,
            workers: None,
        }
    }

    /// Reads a config and resolves its relative paths against the config's
    /// directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.manifest.is_relative() {
            cfg.manifest = base.join(&cfg.manifest);
        }
        if let Some(dir) = cfg.cache_dir.as_mut() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn streams(&self) -> CliResult<Vec<DescriptorSpec>> {
        parse_streams(&self.descriptor)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.streams()?;
        if !(self.lambda >= 0.0) {
            return Err(CliError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CliError::Config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if self.gmm_components == 0 || self.pca_dim == 0 {
            return Err(CliError::Config("gmm_components and pca_dim must be positive".into()));
        }
        if self.trimap_radii.is_empty()
            || self.trimap_radii[0] == 0
            || self.trimap_radii.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(CliError::Config("trimap_radii must be positive and increasing".into()));
        }
        let all: Vec<u8> = self
            .split
            .train
            .iter()
            .chain(&self.split.validation)
            .chain(&self.split.test)
            .copied()
            .collect();
        if all.iter().any(|&f| f >= NUM_FOLDS) {
            return Err(CliError::Config(format!("fold ids must be below {NUM_FOLDS}")));
        }
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != all.len() {
            return Err(CliError::Config("a fold appears in more than one split role".into()));
        }
        if let Some(tune) = &self.tune {
            if tune.lambdas.is_empty() || tune.lambdas.iter().any(|l| !(*l >= 0.0)) {
                return Err(CliError::Config("tune.lambdas must be non-empty and >= 0".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn train_params(&self) -> CliResult<TrainParams> {
        Ok(TrainParams {
            streams: self.streams()?,
            pca_dim: self.pca_dim,
            gmm: GmmParams {
                components: self.gmm_components,
                ..GmmParams::default()
            },
            slr: self.slr.clone(),
            descriptor_sample_budget: self.descriptor_sample_budget,
            channel_sample_budget: self.channel_sample_budget,
            max_training_patches: self.max_training_patches,
            min_posterior: self.min_posterior,
            seed: self.seed,
            threshold: self.threshold,
            pairwise: self.pairwise,
            lambda: self.lambda,
        })
    }
}

/// Parses `A` or `A+B` into descriptor streams. Names outside the built-in
/// list are accepted when they are a valid kind/channel combination.
pub fn parse_streams(text: &str) -> CliResult<Vec<DescriptorSpec>> {
    let streams = text
        .split('+')
        .map(|part| {
            DescriptorSpec::parse(part.trim())
                .map_err(|e| CliError::Config(format!("descriptor `{part}`: {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if streams.is_empty() {
        return Err(CliError::Config("empty descriptor list".into()));
    }
    Ok(streams)
}

/// Whether every stream of `text` is one of the named variants.
pub fn is_named(text: &str) -> bool {
    text.split('+').all(|p| NAMED_VARIANTS.contains(&p.trim()))
}
