//! Superpixel embeddings, the mean foreground/background bank, and the
//! cosine-similarity test that drops boundary superpixels resembling the
//! background.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{overlap_assign, LabelSets};
use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, BinaryMask, RgbImage};
use crate::slic::{slic_segment, SlicParams};
use crate::superpixel::{SegmentStats, SuperpixelMap};

/// A finite feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "embedding entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// How a superpixel is cut out of its image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchMode {
    /// Tight rectangle with pixels outside the segment set to black.
    #[default]
    Masked,
    /// Tight rectangle as it appears in the image.
    Raw,
}

/// A rectangular crop plus which of its pixels describe the superpixel.
///
/// In [`PatchMode::Masked`] the membership is the segment itself; in
/// [`PatchMode::Raw`] every pixel of the crop counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: RgbImage,
    pub membership: BinaryMask,
}

/// Maps a patch to a fixed-length vector. Must be deterministic.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn output_dim(&self) -> usize;
    fn extract(&self, patch: &Patch) -> Result<Vec<f64>>;
}

/// Crops segment `segment` out of `image`.
pub fn extract_patch(image: &RgbImage, map: &SuperpixelMap, segment: u32, mode: PatchMode) -> Result<Patch> {
    ensure_same_dims(map.dims(), image.dims())?;
    map.check_segment(segment)?;
    let stats = map.segment_stats();
    Ok(cut_patch(image, map, segment, &stats[segment as usize], mode))
}

/// Patches for every segment, indexed by id.
pub fn extract_patches(image: &RgbImage, map: &SuperpixelMap, mode: PatchMode) -> Result<Vec<Patch>> {
    ensure_same_dims(map.dims(), image.dims())?;
    Ok(map
        .segment_stats()
        .iter()
        .enumerate()
        .map(|(id, st)| cut_patch(image, map, id as u32, st, mode))
        .collect())
}

fn cut_patch(image: &RgbImage, map: &SuperpixelMap, id: u32, st: &SegmentStats, mode: PatchMode) -> Patch {
    let b = st.bounds;
    let (w, h) = (b.width(), b.height());
    let membership = match mode {
        PatchMode::Masked => BinaryMask::from_fn(w, h, |x, y| map.label(b.x_min + x, b.y_min + y) == id),
        PatchMode::Raw => BinaryMask::ones(w, h),
    };
    let image = RgbImage::from_fn(w, h, |x, y| {
        if membership.get(x, y) {
            image.pixel(b.x_min + x, b.y_min + y)
        } else {
            [0, 0, 0]
        }
    });
    Patch { image, membership }
}

/// Runs `extractor` on `patch` and checks the result.
pub fn embed(extractor: &dyn FeatureExtractor, patch: &Patch) -> Result<EmbeddingVector> {
    ensure_same_dims(patch.image.dims(), patch.membership.dims())?;
    if !patch.membership.has_foreground() {
        return Err(Error::InvalidData("patch has no member pixels".into()));
    }
    let values = extractor.extract(patch)?;
    if values.len() != extractor.output_dim() {
        return Err(Error::EmbeddingDimension {
            expected: extractor.output_dim(),
            found: values.len(),
        });
    }
    EmbeddingVector::new(values)
}

/// Embeds every segment of `map`, indexed by id.
pub fn embed_segments(
    image: &RgbImage,
    map: &SuperpixelMap,
    extractor: &dyn FeatureExtractor,
    mode: PatchMode,
) -> Result<Vec<EmbeddingVector>> {
    extract_patches(image, map, mode)?
        .par_iter()
        .map(|p| embed(extractor, p))
        .collect()
}

/// `u . v / (|u| |v|)`.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::EmbeddingDimension {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.0.iter().zip(&v.0) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Bins per channel in the handcrafted histogram.
pub const HISTOGRAM_BINS: usize = 14;

/// Color statistics over member pixels: per-channel mean and population
/// standard deviation on the 0..255 scale, then a normalized 14-bin histogram
/// per channel. 48 values in total.
#[derive(Clone, Copy, Debug, Default)]
pub struct HandcraftedExtractor;

impl HandcraftedExtractor {
    pub const NAME: &'static str = "handcrafted-color-v1";
    pub const DIM: usize = 6 + 3 * HISTOGRAM_BINS;
}

impl FeatureExtractor for HandcraftedExtractor {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn output_dim(&self) -> usize {
        Self::DIM
    }

    fn extract(&self, patch: &Patch) -> Result<Vec<f64>> {
        let mut sum = [0.0f64; 3];
        let mut hist = [[0usize; HISTOGRAM_BINS]; 3];
        let mut n = 0usize;
        let members: Vec<[u8; 3]> = patch
            .image
            .pixels()
            .zip(patch.membership.as_raw())
            .filter(|(_, &m)| m == 1)
            .map(|(p, _)| p)
            .collect();
        for p in &members {
            n += 1;
            for c in 0..3 {
                sum[c] += p[c] as f64;
                hist[c][p[c] as usize * HISTOGRAM_BINS / 256] += 1;
            }
        }
        if n == 0 {
            return Err(Error::Extractor("patch has no member pixels".into()));
        }
        let mean = sum.map(|s| s / n as f64);
        let mut var = [0.0f64; 3];
        for p in &members {
            for c in 0..3 {
                var[c] += (p[c] as f64 - mean[c]).powi(2);
            }
        }
        let mut out = Vec::with_capacity(Self::DIM);
        out.extend(mean);
        out.extend(var.map(|v| (v / n as f64).sqrt()));
        for h in &hist {
            out.extend(h.iter().map(|&k| k as f64 / n as f64));
        }
        Ok(out)
    }
}

/// Segmentation settings the bank was built with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankSource {
    pub max_segments: usize,
    pub overlap_threshold: f64,
}

/// Mean foreground and background embeddings of a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBank {
    pub extractor_name: String,
    pub extractor_dim: usize,
    pub mean_foreground: EmbeddingVector,
    pub mean_background: EmbeddingVector,
    pub source: BankSource,
    pub foreground_count: usize,
    pub background_count: usize,
}

impl EmbeddingBank {
    /// Averages the given vectors in order.
    pub fn from_samples<'a>(
        extractor_name: &str,
        extractor_dim: usize,
        source: BankSource,
        foreground: impl IntoIterator<Item = &'a EmbeddingVector>,
        background: impl IntoIterator<Item = &'a EmbeddingVector>,
    ) -> Result<Self> {
        let (mean_foreground, foreground_count) = mean_of(extractor_dim, foreground, "foreground")?;
        let (mean_background, background_count) = mean_of(extractor_dim, background, "background")?;
        Ok(Self {
            extractor_name: extractor_name.to_owned(),
            extractor_dim,
            mean_foreground,
            mean_background,
            source,
            foreground_count,
            background_count,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("foreground", &self.mean_foreground),
            ("background", &self.mean_background),
        ] {
            if v.len() != self.extractor_dim {
                return Err(Error::Bank(format!(
                    "mean {what} embedding has {} entries, expected {}",
                    v.len(),
                    self.extractor_dim
                )));
            }
        }
        if self.foreground_count == 0 || self.background_count == 0 {
            return Err(Error::Bank("sample counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Fails unless the bank was built with an extractor of this name and size.
    pub fn check_compatible(&self, extractor: &dyn FeatureExtractor) -> Result<()> {
        if self.extractor_dim != extractor.output_dim() {
            return Err(Error::EmbeddingDimension {
                expected: extractor.output_dim(),
                found: self.extractor_dim,
            });
        }
        if self.extractor_name != extractor.name() {
            return Err(Error::Bank(format!(
                "bank was built with extractor `{}`, not `{}`",
                self.extractor_name,
                extractor.name()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn mean_of<'a>(
    dim: usize,
    vectors: impl IntoIterator<Item = &'a EmbeddingVector>,
    what: &str,
) -> Result<(EmbeddingVector, usize)> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        if v.len() != dim {
            return Err(Error::EmbeddingDimension {
                expected: dim,
                found: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Bank(format!("no {what} superpixels in the dataset")));
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Ok((EmbeddingVector::new(acc)?, n))
}

/// Settings for [`build_embedding_bank`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankParams {
    pub slic: SlicParams,
    pub overlap_threshold: f64,
    pub patch_mode: PatchMode,
}

impl Default for BankParams {
    fn default() -> Self {
        Self {
            slic: SlicParams::with_segments(250),
            overlap_threshold: 0.1,
            patch_mode: PatchMode::Masked,
        }
    }
}

/// Segments, assigns and embeds every image, then averages the foreground
/// and background vectors in dataset and segment order.
pub fn build_embedding_bank(
    dataset: &[(RgbImage, BinaryMask)],
    extractor: &dyn FeatureExtractor,
    params: &BankParams,
) -> Result<EmbeddingBank> {
    if dataset.is_empty() {
        return Err(Error::Bank("dataset is empty".into()));
    }
    let per_image: Vec<(Vec<EmbeddingVector>, LabelSets)> = dataset
        .par_iter()
        .map(|(image, mask)| {
            let map = slic_segment(image, &params.slic)?;
            let sets = overlap_assign(&map, mask, params.overlap_threshold)?;
            let vectors = embed_segments(image, &map, extractor, params.patch_mode)?;
            Ok((vectors, sets))
        })
        .collect::<Result<_>>()?;
    let fg = per_image
        .iter()
        .flat_map(|(v, s)| s.foreground.iter().map(move |&id| &v[id as usize]));
    let bg = per_image
        .iter()
        .flat_map(|(v, s)| s.background.iter().map(move |&id| &v[id as usize]));
    EmbeddingBank::from_samples(
        extractor.name(),
        extractor.output_dim(),
        BankSource {
            max_segments: params.slic.max_segments,
            overlap_threshold: params.overlap_threshold,
        },
        fg,
        bg,
    )
}

/// Moves every superpixel of `candidates` whose embedding is strictly closer
/// (by cosine similarity) to the background mean than to the foreground mean
/// from foreground to background.
pub fn reassign_boundary(
    image: &RgbImage,
    map: &SuperpixelMap,
    sets: &LabelSets,
    candidates: &BTreeSet<u32>,
    extractor: &dyn FeatureExtractor,
    bank: &EmbeddingBank,
    mode: PatchMode,
) -> Result<LabelSets> {
    ensure_same_dims(map.dims(), image.dims())?;
    sets.validate_for(map)?;
    bank.validate()?;
    bank.check_compatible(extractor)?;
    if let Some(&id) = candidates.iter().find(|id| !sets.is_foreground(**id)) {
        return Err(Error::InvalidData(format!(
            "candidate segment {id} is not in the foreground set"
        )));
    }
    let stats = map.segment_stats();
    let ids: Vec<u32> = candidates.iter().copied().collect();
    let removed: Vec<bool> = ids
        .par_iter()
        .map(|&id| {
            let patch = cut_patch(image, map, id, &stats[id as usize], mode);
            let v = embed(extractor, &patch)?;
            prefers_background(&v, bank)
        })
        .collect::<Result<_>>()?;
    let mut out = sets.clone();
    for (&id, _) in ids.iter().zip(&removed).filter(|(_, &r)| r) {
        out.foreground.remove(&id);
        out.background.insert(id);
    }
    Ok(out)
}

/// True iff `C(v, b) > C(v, a)`.
pub fn prefers_background(v: &EmbeddingVector, bank: &EmbeddingBank) -> Result<bool> {
    Ok(cosine_similarity(v, &bank.mean_background)? > cosine_similarity(v, &bank.mean_foreground)?)
}
