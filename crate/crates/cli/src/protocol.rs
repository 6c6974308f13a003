//! Five-fold rotation protocol.
//!
//! Rotation `r` tests on fold `r`, reserves fold `(r + 1) % 5` for
//! validation and trains on the remaining three. Predictions of all test
//! folds are pooled into one confusion matrix.

use log::info;
use rayon::prelude::*;

use mscrf_core::classify::{ModelBundle, UnaryField};
use mscrf_core::crf::PairwiseMode;
use mscrf_core::eval::{accumulate_confusion, ConfusionMatrix};
use mscrf_core::imageio::{DatasetManifest, LabelMask, ManifestEntry, MultiChannelImage, NUM_FOLDS};
use mscrf_core::pipeline::{segment_field, train_bundle, unary_field, TrainParams, TrainingImage};

use crate::cache::{cache_key, UnaryCache};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report::{build_report, Evaluated, MetricsReport, ProtocolInfo, RotationInfo};

pub struct LoadedImage {
    pub id: String,
    pub fold: u8,
    pub image: MultiChannelImage,
    pub mask: LabelMask,
}

pub fn load_folds(manifest: &DatasetManifest, folds: &[u8]) -> CliResult<Vec<LoadedImage>> {
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| folds.contains(&e.fold)).collect();
    entries
        .par_iter()
        .map(|entry| {
            let image = manifest.load_image(entry)?;
            let mask = manifest.load_entry_mask(entry)?.ok_or_else(|| {
                CliError::Data(format!("image {} has no ground-truth mask", entry.image_id()))
            })?;
            Ok(LoadedImage {
                id: entry.image_id(),
                fold: entry.fold,
                image,
                mask,
            })
        })
        .collect()
}

pub fn train_on(images: &[LoadedImage], manifest: &DatasetManifest, params: &TrainParams) -> CliResult<ModelBundle> {
    let data: Vec<TrainingImage> = images
        .iter()
        .map(|l| TrainingImage {
            image: &l.image,
            mask: &l.mask,
        })
        .collect();
    Ok(train_bundle(&data, &manifest.label_names, manifest.mode, params)?)
}

/// Trains a single model on the config's training folds.
pub fn train_from_config(cfg: &ExperimentConfig) -> CliResult<ModelBundle> {
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let images = load_folds(&manifest, &cfg.split.train)?;
    if images.is_empty() {
        return Err(CliError::Data("no training images in the selected folds".into()));
    }
    info!("training on {} images", images.len());
    train_on(&images, &manifest, &cfg.train_params()?)
}

/// Everything a protocol run produces.
pub struct ProtocolOutcome {
    pub report: MetricsReport,
    pub predictions: Vec<Evaluated>,
    /// Unary fields loaded from the cache rather than recomputed.
    pub cache_hits: usize,
}

struct Rotation {
    test: u8,
    validation: u8,
    train: Vec<u8>,
}

fn rotation(r: u8) -> Rotation {
    let validation = (r + 1) % NUM_FOLDS;
    Rotation {
        test: r,
        validation,
        train: (0..NUM_FOLDS).filter(|&f| f != r && f != validation).collect(),
    }
}

fn fields_for(
    bundle: &ModelBundle,
    images: &[LoadedImage],
    cache: Option<&UnaryCache>,
) -> CliResult<(Vec<UnaryField>, usize)> {
    let results: Vec<(UnaryField, bool)> = images
        .par_iter()
        .map(|l| {
            if let Some(field) = cache.and_then(|c| c.load_field(&l.id)) {
                return Ok((field, true));
            }
            let field = unary_field(bundle, &l.image)?;
            if let Some(c) = cache {
                c.store_field(&l.id, &field)?;
            }
            Ok((field, false))
        })
        .collect::<CliResult<_>>()?;
    let hits = results.iter().filter(|r| r.1).count();
    Ok((results.into_iter().map(|r| r.0).collect(), hits))
}

fn segment_all(
    images: &[LoadedImage],
    fields: &[UnaryField],
    cfg: &ExperimentConfig,
    mode: mscrf_core::imageio::Mode,
    lambda: f64,
    pairwise: PairwiseMode,
) -> CliResult<Vec<mscrf_core::crf::Labeling>> {
    images
        .par_iter()
        .zip(fields)
        .map(|(l, f)| Ok(segment_field(f, &l.image, mode, cfg.threshold, lambda, pairwise)?))
        .collect()
}

fn pooled_confusion(
    preds: &[mscrf_core::crf::Labeling],
    images: &[LoadedImage],
    num_classes: usize,
    mode: mscrf_core::imageio::Mode,
) -> CliResult<ConfusionMatrix> {
    let size = mscrf_core::eval::confusion_size(num_classes, mode);
    let mut cm = ConfusionMatrix::zeros(size);
    for (p, l) in preds.iter().zip(images) {
        cm.add(&accumulate_confusion(p, &l.mask, num_classes, mode)?)?;
    }
    Ok(cm)
}

pub fn run_protocol(cfg: &ExperimentConfig) -> CliResult<ProtocolOutcome> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    for f in 0..NUM_FOLDS {
        if !manifest.entries.iter().any(|e| e.fold == f) {
            return Err(CliError::Data(format!("fold {f} has no images")));
        }
    }
    let manifest_text = std::fs::read_to_string(&cfg.manifest).map_err(|e| CliError::io(&cfg.manifest, e))?;
    let params = cfg.train_params()?;
    let key = cache_key(&params, &manifest_text);
    let k = manifest.num_labels();
    let mode = manifest.mode;

    let mut predictions = Vec::new();
    let mut rotations = Vec::new();
    let mut cache_hits = 0;
    for r in 0..NUM_FOLDS {
        let rot = rotation(r);
        let cache = cfg
            .cache_dir
            .as_ref()
            .map(|d| UnaryCache::new(d, &key, r as usize))
            .transpose()?;
        let test = load_folds(&manifest, &[rot.test])?;
        let validation = if cfg.tune.is_some() {
            load_folds(&manifest, &[rot.validation])?
        } else {
            Vec::new()
        };

        let cached_bundle = cache.as_ref().and_then(|c| c.load_bundle());
        let (bundle, train_count) = match cached_bundle {
            Some(b) => {
                info!("rotation {r}: reusing cached model");
                let n = manifest.entries.iter().filter(|e| rot.train.contains(&e.fold)).count();
                (b, n)
            }
            None => {
                let train = load_folds(&manifest, &rot.train)?;
                info!("rotation {r}: training on {} images", train.len());
                let b = train_on(&train, &manifest, &params)?;
                if let Some(c) = &cache {
                    c.store_bundle(&b)?;
                }
                (b, train.len())
            }
        };

        let lambda = match &cfg.tune {
            Some(tune) => {
                let (fields, hits) = fields_for(&bundle, &validation, cache.as_ref())?;
                cache_hits += hits;
                let mut best = (f64::NEG_INFINITY, tune.lambdas[0]);
                for &l in &tune.lambdas {
                    let preds = segment_all(&validation, &fields, cfg, mode, l, cfg.pairwise)?;
                    let ji = pooled_confusion(&preds, &validation, k, mode)?.jaccard_index()?;
                    info!("rotation {r}: validation JI {ji:.4} at lambda {l}");
                    if ji > best.0 {
                        best = (ji, l);
                    }
                }
                best.1
            }
            None => cfg.lambda,
        };

        let (fields, hits) = fields_for(&bundle, &test, cache.as_ref())?;
        cache_hits += hits;
        let preds = segment_all(&test, &fields, cfg, mode, lambda, cfg.pairwise)?;
        let cm = pooled_confusion(&preds, &test, k, mode)?;
        info!("rotation {r}: test OA {:.4}", cm.overall_accuracy().unwrap_or(f64::NAN));
        rotations.push(RotationInfo {
            test_fold: rot.test,
            validation_fold: rot.validation,
            train_folds: rot.train.clone(),
            train_images: train_count,
            test_images: test.len(),
            lambda,
            oa: cm.overall_accuracy()?,
            ca: cm.class_accuracy()?,
            ji: cm.jaccard_index()?,
        });
        for (l, pred) in test.into_iter().zip(preds) {
            predictions.push(Evaluated {
                id: l.id,
                fold: Some(l.fold),
                pred,
                gt: l.mask,
            });
        }
    }
    // manifest order keeps the report independent of fold iteration
    let order: Vec<String> = manifest.entries.iter().map(|e| e.image_id()).collect();
    predictions.sort_by_key(|p| order.iter().position(|id| *id == p.id));

    let name = format!("{} / {}", cfg.descriptor, cfg.pairwise);
    let mut report = build_report(&name, &manifest.label_names, mode, &predictions, &cfg.trimap_radii)?;
    report.protocol = Some(ProtocolInfo {
        descriptor: cfg.descriptor.clone(),
        pairwise: cfg.pairwise.to_string(),
        lambda: cfg.lambda,
        threshold: cfg.threshold,
        seed: cfg.seed,
        tuned: cfg.tune.is_some(),
        channel_pca_fit: "per_fold".into(),
        rotations,
    });
    Ok(ProtocolOutcome {
        report,
        predictions,
        cache_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_partition_the_folds() {
        for r in 0..NUM_FOLDS {
            let rot = rotation(r);
            let mut all = rot.train.clone();
            all.push(rot.test);
            all.push(rot.validation);
            all.sort_unstable();
            assert_eq!(all, vec![0, 1, 2, 3, 4]);
            assert_eq!(rot.train.len(), 3);
        }
        assert_eq!(rotation(4).validation, 0);
    }
}
