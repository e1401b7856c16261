//! Files on disk: images, PNG masks, box annotations and dataset manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, RgbImage};

fn image_error(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_owned(),
        source,
    }
}

/// Loads any supported image format as 8-bit RGB.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w, h, img.into_raw())
}

/// Loads a mask image. Color masks are reduced to luma first.
///
/// Zero is background. At most one distinct nonzero value may appear and it
/// becomes foreground; values other than 1 and 255 are accepted with a
/// warning. Anything else is rejected as non-binary.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    let mut seen = [false; 256];
    for &v in img.as_raw() {
        seen[v as usize] = true;
    }
    let nonzero: Vec<u8> = (1..=255u8).filter(|&v| seen[v as usize]).collect();
    if nonzero.len() > 1 {
        return Err(Error::NonBinaryMask {
            path: path.to_owned(),
            values: nonzero,
        });
    }
    if let Some(&v) = nonzero.first() {
        if v != 1 && v != 255 {
            log::warn!("{}: treating mask value {v} as foreground", path.display());
        }
    }
    BinaryMask::new(w, h, img.into_raw().into_iter().map(|v| (v != 0) as u8).collect())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Writes `mask` as an 8-bit grayscale PNG with values 0 and 255.
pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    save_luma(path, mask.width(), mask.height(), mask.to_luma8())
}

/// Writes raw 8-bit grayscale data as PNG.
pub fn save_luma(path: impl AsRef<Path>, width: u32, height: u32, data: Vec<u8>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let img = image::GrayImage::from_raw(width, height, data)
        .ok_or_else(|| Error::InvalidData("grayscale buffer does not match its size".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

/// Writes an RGB image as PNG.
pub fn save_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let buf = image::RgbImage::from_raw(img.width(), img.height(), img.as_raw().to_vec()).expect("buffer matches dims");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Box annotations keyed by image file name, each box as
/// `[x_min, y_min, x_max, y_max]` with inclusive pixel coordinates.
pub type BoxesFile = BTreeMap<String, Vec<BoundingBox>>;

pub fn load_boxes(path: impl AsRef<Path>) -> Result<BoxesFile> {
    read_json(path.as_ref())
}

pub fn save_boxes(path: impl AsRef<Path>, boxes: &BoxesFile) -> Result<()> {
    write_json(path, boxes)
}

/// One image of a dataset. Paths are relative to the manifest file unless
/// absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    /// Box annotations. When absent they are derived from `gt_mask`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoundingBox>>,
    /// Ground truth used for scoring, and for boxes when `boxes` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask: Option<PathBuf>,
}

/// A list of images with their annotations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Checks that every entry has boxes or a ground-truth mask and that no
    /// two images share a file stem (outputs are named after it).
    pub fn validate(&self) -> Result<()> {
        let mut stems = std::collections::BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.boxes.is_none() && e.gt_mask.is_none() {
                return Err(Error::InvalidData(format!(
                    "manifest entry {i} ({}) has neither boxes nor gt_mask",
                    e.image.display()
                )));
            }
            let stem = output_stem(&e.image)?;
            if !stems.insert(stem.clone()) {
                return Err(Error::InvalidData(format!(
                    "two manifest entries share the file stem `{stem}`"
                )));
            }
        }
        Ok(())
    }

    /// Reads a manifest and makes its paths absolute relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            if e.image.is_relative() {
                e.image = base.join(&e.image);
            }
            if let Some(gt) = &mut e.gt_mask {
                if gt.is_relative() {
                    *gt = base.join(&*gt);
                }
            }
        }
        m.validate()?;
        Ok(m)
    }
}

/// File stem used to name outputs for `image`.
pub fn output_stem(image: &Path) -> Result<String> {
    image
        .file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::InvalidData(format!("cannot derive a file name from {}", image.display())))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let known = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| image::ImageFormat::from_extension(e).is_some());
        if path.is_file() && known {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
