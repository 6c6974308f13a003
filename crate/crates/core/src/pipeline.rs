//! End-to-end training and segmentation.

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{ensure_channels, fit_channel_pca, ChannelId, ChannelPca};
use crate::classify::{
    aggregate_pixel_posteriors, apply_background_rule, late_fuse, patch_probability, train_slr,
    ModelBundle, Seeds, SlrParams, StreamModel, UnaryField,
};
use crate::crf::{alpha_expansion_from, ContrastImage, EnergyModel, Labeling, PairwiseMode};
use crate::descriptors::{compose_descriptor, DescriptorSpec};
use crate::encoding::{
    fit_descriptor_pca, fit_gmm, FisherEncoder, GmmParams, DEFAULT_MIN_POSTERIOR, PROJECTED_DIM,
};
use crate::error::{Error, Result};
use crate::imageio::{LabelMask, MultiChannelImage, Mode};
use crate::patches::{grid_patches, PatchSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// Late-fused descriptor streams, e.g. `[SIFT_rgbn]` or `[COL_rgb, SIFT_l]`.
    pub streams: Vec<DescriptorSpec>,
    pub pca_dim: usize,
    pub gmm: GmmParams,
    pub slr: SlrParams,
    /// Patches drawn for descriptor PCA and GMM fitting.
    pub descriptor_sample_budget: usize,
    /// Pixels drawn for the channel PCA.
    pub channel_sample_budget: usize,
    /// Optional cap on the labeled patches used for classifier training.
    pub max_training_patches: Option<usize>,
    pub min_posterior: f64,
    pub seed: u64,
    pub threshold: f64,
    pub pairwise: PairwiseMode,
    pub lambda: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            streams: vec![DescriptorSpec::parse("SIFT_rgbn").expect("named variant")],
            pca_dim: PROJECTED_DIM,
            gmm: GmmParams::default(),
            slr: SlrParams::default(),
            descriptor_sample_budget: 500_000,
            channel_sample_budget: 1_000_000,
            max_training_patches: None,
            min_posterior: DEFAULT_MIN_POSTERIOR,
            seed: 0,
            threshold: 0.5,
            pairwise: PairwiseMode::VisNir,
            lambda: 5.0,
        }
    }
}

/// A training image with its ground truth.
pub struct TrainingImage<'a> {
    pub image: &'a MultiChannelImage,
    pub mask: &'a LabelMask,
}

/// Stream-specific sub-seeds derived from the master seed.
fn derive_seeds(seed: u64) -> Seeds {
    let mix = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03));
    Seeds {
        channel_pca: mix(1),
        descriptor_sample: mix(2),
        gmm: mix(3),
    }
}

/// Majority ground-truth label inside a patch window, counting in-bounds
/// pixels only. Ties go to the lowest id. Returns `None` when the majority
/// is void.
pub fn patch_label(mask: &LabelMask, spec: &PatchSpec) -> Option<u8> {
    let mut counts = [0u32; 256];
    let (xs, ys) = spec.clipped(mask.width, mask.height);
    for y in ys {
        for x in xs.clone() {
            counts[mask.get(x, y) as usize] += 1;
        }
    }
    let mut best = 0usize;
    for id in 1..256 {
        if counts[id] > counts[best] {
            best = id;
        }
    }
    (counts[best] > 0 && !mask.is_void(best as u8)).then_some(best as u8)
}

fn prepared(img: &MultiChannelImage, bundle_pca: Option<&ChannelPca>, streams: &[DescriptorSpec]) -> Result<MultiChannelImage> {
    let mut img = img.clone();
    for s in streams {
        ensure_channels(&mut img, &s.channels, bundle_pca)?;
    }
    Ok(img)
}

fn subsample(n: usize, budget: usize, seed: u64) -> Vec<usize> {
    if n <= budget {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, n, budget).into_vec();
    picks.sort_unstable();
    picks
}

/// Fits channel PCA (when a stream needs it), descriptor PCA, GMM and
/// one-vs-all classifiers for every stream.
pub fn train_bundle(
    data: &[TrainingImage],
    label_names: &[String],
    mode: Mode,
    params: &TrainParams,
) -> Result<ModelBundle> {
    if params.streams.is_empty() {
        return Err(Error::InvalidParameter("at least one descriptor stream is required".into()));
    }
    if data.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let num_classes = label_names.len();
    let seeds = derive_seeds(params.seed);

    let channel_pca = if params.streams.iter().any(|s| s.channels.needs_pca()) {
        let images: Vec<&MultiChannelImage> = data.iter().map(|d| d.image).collect();
        Some(fit_channel_pca(&images, params.channel_sample_budget, seeds.channel_pca)?)
    } else {
        None
    };
    let needs_nir = params.streams.iter().any(|s| s.channels.needs_nir());
    if needs_nir && data.iter().any(|d| !d.image.has_nir()) {
        return Err(Error::MissingChannel(ChannelId::Nir));
    }

    // labeled patches, in image order then grid order
    let per_image: Vec<(MultiChannelImage, Vec<(PatchSpec, usize)>)> = data
        .par_iter()
        .map(|d| {
            if (d.image.width(), d.image.height()) != (d.mask.width, d.mask.height) {
                return Err(Error::DimensionMismatch {
                    expected: (d.image.width(), d.image.height()),
                    actual: (d.mask.width, d.mask.height),
                });
            }
            let img = prepared(d.image, channel_pca.as_ref(), &params.streams)?;
            let labeled = grid_patches(img.width(), img.height())?
                .into_iter()
                .filter_map(|spec| {
                    let label = patch_label(d.mask, &spec)?;
                    // background (indoor) becomes the shared negative class
                    Some((spec, (label as usize).min(num_classes)))
                })
                .collect();
            Ok((img, labeled))
        })
        .collect::<Result<_>>()?;

    let mut patches: Vec<(usize, PatchSpec, usize)> = Vec::new();
    for (i, (_, labeled)) in per_image.iter().enumerate() {
        patches.extend(labeled.iter().map(|&(spec, label)| (i, spec, label)));
    }
    if let Some(cap) = params.max_training_patches {
        let keep = subsample(patches.len(), cap, seeds.descriptor_sample ^ 0x5EED);
        patches = keep.into_iter().map(|i| patches[i]).collect();
    }
    let labels: Vec<usize> = patches.iter().map(|p| p.2).collect();

    let mut streams = Vec::with_capacity(params.streams.len());
    for (si, stream) in params.streams.iter().enumerate() {
        let descriptors: Vec<Vec<f64>> = patches
            .par_iter()
            .map(|(i, spec, _)| {
                compose_descriptor(&per_image[*i].0, spec, stream.kind, &stream.channels).map(|d| d.vector)
            })
            .collect::<Result<_>>()?;

        let sample_seed = seeds.descriptor_sample.wrapping_add(si as u64);
        let sample: Vec<&Vec<f64>> = subsample(descriptors.len(), params.descriptor_sample_budget, sample_seed)
            .into_iter()
            .map(|i| &descriptors[i])
            .collect();
        let pca = fit_descriptor_pca(&sample, params.pca_dim)?;
        let projected_sample: Vec<Vec<f64>> = sample
            .par_iter()
            .map(|d| pca.project(d))
            .collect::<Result<_>>()?;
        let gmm_params = GmmParams {
            seed: seeds.gmm.wrapping_add(si as u64),
            ..params.gmm.clone()
        };
        let gmm = fit_gmm(&projected_sample, &gmm_params)?.codebook;
        drop(projected_sample);

        let encoder = FisherEncoder::new(&gmm, params.min_posterior);
        let fvs = descriptors
            .iter()
            .map(|d| encoder.encode(&[pca.project(d)?.as_slice()]))
            .collect::<Result<Vec<_>>>()?;
        drop(encoder);
        let classifier = train_slr(&fvs, &labels, num_classes, &params.slr)?;
        streams.push(StreamModel {
            descriptor: stream.clone(),
            pca,
            gmm,
            classifier,
            min_posterior: params.min_posterior,
        });
    }

    let bundle = ModelBundle {
        label_names: label_names.to_vec(),
        mode,
        channel_pca,
        streams,
        threshold: params.threshold,
        pairwise: params.pairwise,
        lambda: params.lambda,
        seeds,
        descriptor_sample_budget: params.descriptor_sample_budget,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn stream_field(stream: &StreamModel, img: &MultiChannelImage) -> Result<UnaryField> {
    let specs = grid_patches(img.width(), img.height())?;
    let encoder = FisherEncoder::new(&stream.gmm, stream.min_posterior);
    let probs = specs
        .iter()
        .map(|spec| {
            let d = compose_descriptor(img, spec, stream.descriptor.kind, &stream.descriptor.channels)?;
            let fv = encoder.encode(&[stream.pca.project(&d.vector)?.as_slice()])?;
            Ok((*spec, patch_probability(&stream.classifier, &fv)?))
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_pixel_posteriors(&probs, img.width(), img.height())
}

/// Late-fused per-pixel class posteriors, before any background rule.
pub fn unary_field(bundle: &ModelBundle, img: &MultiChannelImage) -> Result<UnaryField> {
    if bundle.needs_nir() && !img.has_nir() {
        return Err(Error::MissingChannel(ChannelId::Nir));
    }
    let descriptors: Vec<DescriptorSpec> = bundle.streams.iter().map(|s| s.descriptor.clone()).collect();
    let img = prepared(img, bundle.channel_pca.as_ref(), &descriptors)?;
    let fields = bundle
        .streams
        .iter()
        .map(|s| stream_field(s, &img))
        .collect::<Result<Vec<_>>>()?;
    late_fuse(&fields)
}

/// CRF inference on precomputed posteriors. In indoor mode the background
/// pseudo-class is added first. Alpha-expansion starts from the argmax.
pub fn segment_field(
    field: &UnaryField,
    img: &MultiChannelImage,
    mode: Mode,
    threshold: f64,
    lambda: f64,
    pairwise: PairwiseMode,
) -> Result<Labeling> {
    let field = match mode {
        Mode::IndoorBackground => apply_background_rule(field, threshold, mode)?,
        Mode::OutdoorVoid => field.clone(),
    };
    let init = Labeling::new(field.width, field.height, field.argmax())?;
    let contrast = ContrastImage::from_image(img, pairwise)?;
    let model = EnergyModel::new(&field, &contrast, lambda)?;
    Ok(alpha_expansion_from(&model, &init)?.labeling)
}

/// Full pipeline on one image with the bundle's threshold.
pub fn segment_image(
    bundle: &ModelBundle,
    img: &MultiChannelImage,
    lambda: f64,
    pairwise: PairwiseMode,
) -> Result<Labeling> {
    if lambda < 0.0 {
        return Err(Error::NonMetricPairwise);
    }
    let field = unary_field(bundle, img)?;
    segment_field(&field, img, bundle.mode, bundle.threshold, lambda, pairwise)
}
