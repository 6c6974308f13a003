//! Loading and validation of registered RGB/NIR image pairs, label masks
//! and dataset manifests.
//!
//! All images are 8-bit (or 16-bit) PNG. Intensities are normalized to
//! `[0, 1]` at load time. Masks are single-channel PNGs of label ids with
//! [`VOID_ID`] reserved for unlabeled pixels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::channels::ChannelId;
use crate::error::{Error, Result};

/// Label id reserved for void pixels in masks.
pub const VOID_ID: u8 = 255;

/// Number of folds of the evaluation protocol.
pub const NUM_FOLDS: u8 = 5;

/// A single intensity plane stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "plane of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with edge-clamp padding.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }
}

/// A registered multispectral image: R, G, B planes, optional NIR, plus any
/// derived channels (luma, PCA planes) that have been attached.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelImage {
    width: usize,
    height: usize,
    channels: BTreeMap<ChannelId, Plane>,
    source_id: String,
}

impl MultiChannelImage {
    /// Builds an image from raw planes, validating shape and range.
    pub fn new(
        source_id: impl Into<String>,
        red: Plane,
        green: Plane,
        blue: Plane,
        nir: Option<Plane>,
    ) -> Result<Self> {
        let (width, height) = (red.width, red.height);
        let mut channels = BTreeMap::new();
        channels.insert(ChannelId::R, red);
        channels.insert(ChannelId::G, green);
        channels.insert(ChannelId::B, blue);
        if let Some(nir) = nir {
            channels.insert(ChannelId::Nir, nir);
        }
        let img = MultiChannelImage {
            width,
            height,
            channels,
            source_id: source_id.into(),
        };
        for plane in img.channels.values() {
            img.check_plane(plane)?;
        }
        Ok(img)
    }

    fn check_plane(&self, plane: &Plane) -> Result<()> {
        if plane.width != self.width || plane.height != self.height {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: (plane.width, plane.height),
            });
        }
        if plane.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(
                "plane intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn has(&self, id: ChannelId) -> bool {
        self.channels.contains_key(&id)
    }

    pub fn has_nir(&self) -> bool {
        self.has(ChannelId::Nir)
    }

    pub fn channel(&self, id: ChannelId) -> Result<&Plane> {
        self.channels.get(&id).ok_or(Error::MissingChannel(id))
    }

    pub fn channel_ids(&self) -> impl Iterator<Item = ChannelId> + '_ {
        self.channels.keys().copied()
    }

    /// Attaches a derived plane. Raw planes cannot be replaced.
    pub fn insert_derived(&mut self, id: ChannelId, plane: Plane) -> Result<()> {
        if id.is_raw() {
            return Err(Error::InvalidParameter(format!(
                "{id} is a raw channel and cannot be overwritten"
            )));
        }
        self.check_plane(&plane)?;
        self.channels.insert(id, plane);
        Ok(())
    }

    /// The RGBN vector of pixel `idx` (row-major).
    pub(crate) fn rgbn(&self, idx: usize) -> Result<[f64; 4]> {
        let nir = self.channel(ChannelId::Nir).map_err(|_| Error::MissingNir)?;
        Ok([
            self.channels[&ChannelId::R].data[idx],
            self.channels[&ChannelId::G].data[idx],
            self.channels[&ChannelId::B].data[idx],
            nir.data[idx],
        ])
    }
}

/// Evaluation convention for a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Void pixels are excluded from training and evaluation.
    OutdoorVoid,
    /// Unlabeled pixels form a scored background class that is predicted by
    /// thresholding the class posteriors.
    IndoorBackground,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outdoor_void" | "outdoor" => Ok(Mode::OutdoorVoid),
            "indoor_background" | "indoor" => Ok(Mode::IndoorBackground),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

/// Per-pixel ground-truth labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
    pub void_id: u8,
    pub background_id: Option<u8>,
}

impl LabelMask {
    /// Validates raw label ids against a label set of `num_labels` classes.
    ///
    /// In indoor mode the background id is `num_labels`, the slot right after
    /// the last class; void is not allowed.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        num_labels: usize,
        mode: Mode,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "mask of {width}x{height} needs {} ids, got {}",
                width * height,
                labels.len()
            )));
        }
        if num_labels == 0 || num_labels >= VOID_ID as usize {
            return Err(Error::InvalidParameter(format!(
                "label set size {num_labels} outside 1..{VOID_ID}"
            )));
        }
        let background_id = match mode {
            Mode::OutdoorVoid => None,
            Mode::IndoorBackground => Some(num_labels as u8),
        };
        for (i, &id) in labels.iter().enumerate() {
            let ok = (id as usize) < num_labels
                || match mode {
                    Mode::OutdoorVoid => id == VOID_ID,
                    Mode::IndoorBackground => Some(id) == background_id,
                };
            if !ok {
                return Err(Error::UnknownLabel {
                    id,
                    x: i % width,
                    y: i / width,
                });
            }
        }
        Ok(LabelMask {
            width,
            height,
            labels,
            void_id: VOID_ID,
            background_id,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn is_void(&self, id: u8) -> bool {
        self.background_id.is_none() && id == self.void_id
    }

    /// Number of pixels carrying each id, indexed by id.
    pub fn counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for &id in &self.labels {
            *counts.entry(id).or_insert(0) += 1;
        }
        counts
    }

    /// Pixels that take part in evaluation (non-void).
    pub fn evaluable_pixels(&self) -> usize {
        self.labels.iter().filter(|&&id| !self.is_void(id)).count()
    }
}

/// One image of a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rgb: PathBuf,
    #[serde(default)]
    pub nir: Option<PathBuf>,
    #[serde(default)]
    pub mask: Option<PathBuf>,
    pub fold: u8,
}

impl ManifestEntry {
    /// Stable identifier: the RGB file stem, with a trailing `_rgb` removed.
    pub fn image_id(&self) -> String {
        let stem = self
            .rgb
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        stem.strip_suffix("_rgb").map(str::to_owned).unwrap_or(stem)
    }
}

/// A dataset description with explicit fold assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub mode: Mode,
    #[serde(rename = "labels")]
    pub label_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, root)
    }

    pub fn from_json(text: &str, root: PathBuf) -> Result<Self> {
        let mut manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.root = root;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_names.is_empty() {
            return Err(Error::Manifest("label list is empty".into()));
        }
        if self.label_names.len() >= VOID_ID as usize {
            return Err(Error::Manifest(format!(
                "at most {} labels are supported",
                VOID_ID - 1
            )));
        }
        for entry in &self.entries {
            if entry.fold >= NUM_FOLDS {
                return Err(Error::Manifest(format!(
                    "{}: fold {} outside 0..{}",
                    entry.rgb.display(),
                    entry.fold,
                    NUM_FOLDS - 1
                )));
            }
        }
        Ok(())
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    pub fn load_image(&self, entry: &ManifestEntry) -> Result<MultiChannelImage> {
        let nir = entry.nir.as_ref().map(|p| self.resolve(p));
        let mut img = load_image_pair(&self.resolve(&entry.rgb), nir.as_deref())?;
        img.source_id = entry.image_id();
        Ok(img)
    }

    pub fn load_entry_mask(&self, entry: &ManifestEntry) -> Result<Option<LabelMask>> {
        entry
            .mask
            .as_ref()
            .map(|p| load_mask(&self.resolve(p), self))
            .transpose()
    }
}

fn to_unit(value: u16, max: f64) -> f64 {
    value as f64 / max
}

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::decode(path, e))
}

/// Loads a registered RGB image and optional NIR image into normalized planes.
pub fn load_image_pair(rgb_path: &Path, nir_path: Option<&Path>) -> Result<MultiChannelImage> {
    let rgb = open(rgb_path)?;
    let (width, height) = (rgb.width() as usize, rgb.height() as usize);
    let mut planes = [
        Vec::with_capacity(width * height),
        Vec::with_capacity(width * height),
        Vec::with_capacity(width * height),
    ];
    match &rgb {
        DynamicImage::ImageRgb8(buf) => {
            for px in buf.pixels() {
                for c in 0..3 {
                    planes[c].push(to_unit(px[c] as u16, 255.0));
                }
            }
        }
        DynamicImage::ImageRgb16(buf) => {
            for px in buf.pixels() {
                for c in 0..3 {
                    planes[c].push(to_unit(px[c], 65535.0));
                }
            }
        }
        other => {
            return Err(Error::decode(
                rgb_path,
                format!("expected a 3-channel image, found {:?}", other.color()),
            ))
        }
    }

    let nir = match nir_path {
        None => None,
        Some(path) => {
            let img = open(path)?;
            let dims = (img.width() as usize, img.height() as usize);
            if dims != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    actual: dims,
                });
            }
            let data = match &img {
                DynamicImage::ImageLuma8(buf) => {
                    buf.pixels().map(|p| to_unit(p[0] as u16, 255.0)).collect()
                }
                DynamicImage::ImageLuma16(buf) => {
                    buf.pixels().map(|p| to_unit(p[0], 65535.0)).collect()
                }
                other => {
                    return Err(Error::decode(
                        path,
                        format!("expected a 1-channel image, found {:?}", other.color()),
                    ))
                }
            };
            Some(Plane::new(width, height, data)?)
        }
    };

    let [r, g, b] = planes;
    let source_id = rgb_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    MultiChannelImage::new(
        source_id,
        Plane::new(width, height, r)?,
        Plane::new(width, height, g)?,
        Plane::new(width, height, b)?,
        nir,
    )
}

/// Reads a single-channel 8-bit label plane.
pub fn read_label_plane(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    match open(path)? {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok((w, h, buf.into_raw()))
        }
        other => Err(Error::decode(
            path,
            format!("expected an 8-bit single-channel mask, found {:?}", other.color()),
        )),
    }
}

/// Loads and validates a ground-truth mask against a manifest's label set.
pub fn load_mask(path: &Path, manifest: &DatasetManifest) -> Result<LabelMask> {
    let (w, h, labels) = read_label_plane(path)?;
    LabelMask::new(w, h, labels, manifest.num_labels(), manifest.mode)
}

/// Writes a plane of label ids as an 8-bit grayscale PNG.
pub fn write_label_plane(path: &Path, width: usize, height: usize, labels: &[u8]) -> Result<()> {
    let buf: GrayImage = ImageBuffer::from_raw(width as u32, height as u32, labels.to_vec())
        .ok_or_else(|| Error::ShapeMismatch("label buffer does not match dimensions".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::decode(path, e))
}

pub fn write_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    write_label_plane(path, mask.width, mask.height, &mask.labels)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes the raw planes of an image as an 8-bit RGB PNG and, if present,
/// an 8-bit grayscale NIR PNG.
pub fn write_image_pair(
    img: &MultiChannelImage,
    rgb_path: &Path,
    nir_path: Option<&Path>,
) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let r = img.channel(ChannelId::R)?;
    let g = img.channel(ChannelId::G)?;
    let b = img.channel(ChannelId::B)?;
    let rgb = ImageBuffer::from_fn(w, h, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([quantize(r.get(x, y)), quantize(g.get(x, y)), quantize(b.get(x, y))])
    });
    rgb.save_with_format(rgb_path, image::ImageFormat::Png)
        .map_err(|e| Error::decode(rgb_path, e))?;
    if let Some(path) = nir_path {
        let nir = img.channel(ChannelId::Nir).map_err(|_| Error::MissingNir)?;
        let buf = ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantize(nir.get(x as usize, y as usize))])
        });
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::decode(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize, mode: Mode) -> DatasetManifest {
        DatasetManifest {
            mode,
            label_names: (0..n).map(|i| format!("c{i}")).collect(),
            entries: vec![],
            root: PathBuf::new(),
        }
    }

    fn save_rgb(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
        ImageBuffer::<Rgb<u8>, _>::from_fn(w, h, |x, y| Rgb(f(x, y)))
            .save(path)
            .unwrap();
    }

    fn save_gray(path: &Path, w: u32, h: u32, v: u8) {
        ImageBuffer::<Luma<u8>, _>::from_fn(w, h, |_, _| Luma([v]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn white_rgb_without_nir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("white.png");
        save_rgb(&p, 2, 2, |_, _| [255, 255, 255]);
        let img = load_image_pair(&p, None).unwrap();
        assert!(!img.has_nir());
        for c in [ChannelId::R, ChannelId::G, ChannelId::B] {
            assert!(img.channel(c).unwrap().data().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn mismatched_nir_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = dir.path().join("a.png");
        let nir = dir.path().join("a_nir.png");
        save_rgb(&rgb, 2, 2, |_, _| [0, 0, 0]);
        save_gray(&nir, 3, 3, 7);
        let err = load_image_pair(&rgb, Some(&nir)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn normalizes_by_255() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = dir.path().join("a.png");
        let nir = dir.path().join("n.png");
        save_rgb(&rgb, 1, 1, |_, _| [128, 0, 0]);
        save_gray(&nir, 1, 1, 128);
        let img = load_image_pair(&rgb, Some(&nir)).unwrap();
        assert!((img.channel(ChannelId::R).unwrap().get(0, 0) - 0.50196).abs() < 1e-5);
        assert_eq!(img.channel(ChannelId::Nir).unwrap().get(0, 0), 128.0 / 255.0);
    }

    #[test]
    fn gray_rgb_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        save_gray(&p, 2, 2, 3);
        assert!(matches!(
            load_image_pair(&p, None),
            Err(Error::Decode { .. })
        ));
    }

    #[test]
    fn all_void_mask_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_label_plane(&p, 3, 2, &[VOID_ID; 6]).unwrap();
        let mask = load_mask(&p, &manifest(10, Mode::OutdoorVoid)).unwrap();
        assert_eq!(mask.evaluable_pixels(), 0);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let mut ids = vec![0u8; 16];
        ids[5] = 250;
        let err = LabelMask::new(4, 4, ids, 10, Mode::OutdoorVoid).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { id: 250, x: 1, y: 1 }));
    }

    #[test]
    fn indoor_mode_accepts_background_but_not_void() {
        assert!(LabelMask::new(1, 2, vec![0, 3], 3, Mode::IndoorBackground).is_ok());
        assert!(LabelMask::new(1, 2, vec![0, VOID_ID], 3, Mode::IndoorBackground).is_err());
    }

    #[test]
    fn two_class_mask_counts() {
        // top two rows class 0, bottom two rows class 1
        let ids: Vec<u8> = (0..16).map(|i| if i < 8 { 0 } else { 1 }).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_label_plane(&p, 4, 4, &ids).unwrap();
        let mask = load_mask(&p, &manifest(2, Mode::OutdoorVoid)).unwrap();
        let counts = mask.counts();
        assert_eq!(counts[&0], 8);
        assert_eq!(counts[&1], 8);
    }

    #[test]
    fn mask_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        let ids: Vec<u8> = (0..35).map(|i| [0, 1, 2, VOID_ID][i % 4]).collect();
        write_label_plane(&a, 7, 5, &ids).unwrap();
        let m = manifest(3, Mode::OutdoorVoid);
        write_mask(&load_mask(&a, &m).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn manifest_parses_schema() {
        let json = r#"{"mode": "indoor_background", "labels": ["cup", "mouse"],
            "entries": [{"rgb": "a_rgb.png", "nir": null, "mask": "a.png", "fold": 4}]}"#;
        let m = DatasetManifest::from_json(json, PathBuf::from("/data")).unwrap();
        assert_eq!(m.mode, Mode::IndoorBackground);
        assert_eq!(m.entries[0].image_id(), "a");
        assert_eq!(m.resolve(&m.entries[0].rgb), PathBuf::from("/data/a_rgb.png"));
    }

    #[test]
    fn manifest_rejects_bad_fold() {
        let json = r#"{"mode": "outdoor_void", "labels": ["sky"],
            "entries": [{"rgb": "a.png", "fold": 5}]}"#;
        assert!(matches!(
            DatasetManifest::from_json(json, PathBuf::new()),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn loading_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        save_rgb(&p, 5, 3, |x, y| [(x * 40) as u8, (y * 70) as u8, 9]);
        assert_eq!(load_image_pair(&p, None).unwrap(), load_image_pair(&p, None).unwrap());
    }
}
