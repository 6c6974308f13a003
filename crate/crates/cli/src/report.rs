//! Metrics computation and report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mscrf_core::crf::Labeling;
use mscrf_core::eval::{accumulate_confusion, trimap_curve, ConfusionMatrix};
use mscrf_core::imageio::{write_label_plane, LabelMask, Mode};

use crate::error::{CliError, CliResult};
use crate::plot::render_trimap_plot;

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub accuracy: Option<f64>,
    pub jaccard: Option<f64>,
    pub gt_pixels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimapPoint {
    pub r: usize,
    pub accuracy: f64,
    pub band_pixels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    pub fold: Option<u8>,
    /// Per-image overall accuracy; absent when the image has no scored pixel.
    pub oa: Option<f64>,
    pub pixels: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationInfo {
    pub test_fold: u8,
    pub validation_fold: u8,
    pub train_folds: Vec<u8>,
    pub train_images: usize,
    pub test_images: usize,
    pub lambda: f64,
    pub oa: f64,
    pub ca: f64,
    pub ji: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolInfo {
    pub descriptor: String,
    pub pairwise: String,
    pub lambda: f64,
    pub threshold: f64,
    pub seed: u64,
    pub tuned: bool,
    /// The channel PCA is refit on the training folds of every rotation.
    pub channel_pca_fit: String,
    pub rotations: Vec<RotationInfo>,
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub mode: Mode,
    /// Scored labels, with `background` appended in indoor mode.
    pub labels: Vec<String>,
    pub oa: f64,
    pub ca: f64,
    pub ji: f64,
    pub per_class: BTreeMap<String, ClassEntry>,
    pub confusion: Vec<Vec<u64>>,
    pub trimap: Vec<TrimapPoint>,
    /// Which per-image score feeds significance tests.
    pub t_test_score: String,
    pub per_image: Vec<ImageScore>,
    pub protocol: Option<ProtocolInfo>,
}

/// One predicted image with its ground truth.
pub struct Evaluated {
    pub id: String,
    pub fold: Option<u8>,
    pub pred: Labeling,
    pub gt: LabelMask,
}

pub fn scored_labels(label_names: &[String], mode: Mode) -> Vec<String> {
    let mut names = label_names.to_vec();
    if mode == Mode::IndoorBackground {
        names.push("background".into());
    }
    names
}

/// Pooled confusion, per-class scores, trimap curve and per-image OA.
pub fn build_report(
    name: &str,
    label_names: &[String],
    mode: Mode,
    images: &[Evaluated],
    radii: &[usize],
) -> CliResult<MetricsReport> {
    let k = label_names.len();
    let labels = scored_labels(label_names, mode);
    let mut pooled = ConfusionMatrix::zeros(labels.len());
    let mut per_image = Vec::with_capacity(images.len());
    for img in images {
        let c = accumulate_confusion(&img.pred, &img.gt, k, mode)?;
        pooled.add(&c)?;
        per_image.push(ImageScore {
            id: img.id.clone(),
            fold: img.fold,
            oa: c.overall_accuracy().ok(),
            pixels: c.total(),
        });
    }
    let scores = pooled.class_scores()?;
    let per_class = labels
        .iter()
        .enumerate()
        .map(|(i, n)| {
            (
                n.clone(),
                ClassEntry {
                    accuracy: scores.accuracy[i],
                    jaccard: scores.jaccard[i],
                    gt_pixels: pooled.gt_total(i),
                },
            )
        })
        .collect();
    let pairs: Vec<(&Labeling, &LabelMask)> = images.iter().map(|e| (&e.pred, &e.gt)).collect();
    let trimap = match trimap_curve(&pairs, radii) {
        Ok(curve) => curve
            .radii
            .iter()
            .zip(&curve.accuracy)
            .zip(&curve.band_pixels)
            .map(|((&r, &accuracy), &band_pixels)| TrimapPoint { r, accuracy, band_pixels })
            .collect(),
        Err(mscrf_core::Error::EmptyBand) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(MetricsReport {
        name: name.to_string(),
        mode,
        labels,
        oa: pooled.overall_accuracy()?,
        ca: pooled.class_accuracy()?,
        ji: pooled.jaccard_index()?,
        per_class,
        confusion: pooled.counts,
        trimap,
        t_test_score: "per_image_oa".into(),
        per_image,
        protocol: None,
    })
}

pub fn metrics_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn load_report(dir: &Path) -> CliResult<MetricsReport> {
    let path = if dir.is_dir() { dir.join(METRICS_FILE) } else { dir.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Writes `metrics.json`, `confusion.csv`, `trimap.csv`, `per_image.csv`,
/// optionally `trimap.png`, and the predicted label maps.
pub fn write_report(
    out: &Path,
    report: &MetricsReport,
    images: &[Evaluated],
    plot: bool,
) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join(METRICS_FILE);
    fs::write(&path, metrics_json(report)).map_err(|e| CliError::io(&path, e))?;

    let mut w = csv::Writer::from_path(out.join("confusion.csv"))?;
    let mut header = vec!["gt\\pred".to_string()];
    header.extend(report.labels.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in report.labels.iter().zip(&report.confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("trimap.csv"))?;
    w.write_record(["r", "accuracy", "band_pixels"])?;
    for p in &report.trimap {
        w.write_record([p.r.to_string(), p.accuracy.to_string(), p.band_pixels.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;

    let mut w = csv::Writer::from_path(out.join("per_image.csv"))?;
    w.write_record(["image_id", "fold", "oa", "pixels"])?;
    for s in &report.per_image {
        w.write_record([
            s.id.clone(),
            s.fold.map(|f| f.to_string()).unwrap_or_default(),
            s.oa.map(|v| v.to_string()).unwrap_or_default(),
            s.pixels.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;

    if plot && !report.trimap.is_empty() {
        let path = out.join("trimap.png");
        render_trimap_plot(&report.trimap, &path)?;
    }

    let pred_dir = out.join("predictions");
    fs::create_dir_all(&pred_dir).map_err(|e| CliError::io(&pred_dir, e))?;
    for img in images {
        let path = pred_dir.join(format!("{}.png", img.id));
        write_label_plane(&path, img.pred.width, img.pred.height, &img.pred.labels)?;
    }
    Ok(())
}
