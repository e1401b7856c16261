//! The two end-to-end procedures: rapid (superpixels, threshold, CRF) and
//! robust (the same with an embedding-based boundary pass before the CRF).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assignment::{boundary_foreground, overlap_assign, sets_to_mask, LabelSets};
use crate::bbox::mask_occupancy;
use crate::crf::{mean_field_refine, unary_from_mask, CrfParams, Refinement};
use crate::embedding::{
    reassign_boundary, BankParams, EmbeddingBank, FeatureExtractor, HandcraftedExtractor, PatchMode,
};
use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, BinaryMask, RgbImage};
use crate::metrics::iou;
use crate::slic::{slic_segment, SlicParams};
use crate::superpixel::SuperpixelMap;

/// Fallback thresholds: below either, the box itself is returned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardParams {
    /// Minimum fraction of the image the box mask must cover.
    pub min_occupancy: f64,
    /// Minimum IoU between the refined mask and the box mask.
    pub min_iou: f64,
}

impl Default for GuardParams {
    fn default() -> Self {
        Self {
            min_occupancy: 0.1,
            min_iou: 0.1,
        }
    }
}

/// Which feature extractor embeds superpixels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExtractorConfig {
    #[default]
    Handcrafted,
    /// A network in ONNX format plus a JSON sidecar with its input size and
    /// channel normalization.
    Onnx { model: PathBuf, metadata: PathBuf },
}

impl ExtractorConfig {
    pub fn build(&self) -> Result<Box<dyn FeatureExtractor>> {
        match self {
            Self::Handcrafted => Ok(Box::new(HandcraftedExtractor)),
            Self::Onnx { model, metadata } => crate::neural::load_extractor(model, metadata),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub extractor: ExtractorConfig,
    pub patch_mode: PatchMode,
    /// Bank file used by the robust variant.
    pub bank: Option<PathBuf>,
    /// Boundary passes per image in the robust variant.
    pub robust_iterations: usize,
    /// Segment budget when building a bank.
    pub bank_max_segments: usize,
    /// Overlap threshold when building a bank.
    pub bank_overlap_threshold: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            extractor: ExtractorConfig::Handcrafted,
            patch_mode: PatchMode::Masked,
            bank: None,
            robust_iterations: 1,
            bank_max_segments: 250,
            bank_overlap_threshold: 0.1,
        }
    }
}

/// Every tunable of both procedures. All sections are optional in JSON and
/// fall back to their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub slic: SlicParams,
    /// Minimum fraction of a superpixel inside the box for it to count as
    /// foreground.
    pub overlap_threshold: f64,
    pub crf: CrfParams,
    /// Checked against the final (post-CRF) mask.
    pub guards: GuardParams,
    pub embedding: EmbeddingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            slic: SlicParams::with_segments(200),
            overlap_threshold: 0.6,
            crf: CrfParams::default(),
            guards: GuardParams::default(),
            embedding: EmbeddingConfig::default(),
        }
    }
}

/// The two procedures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rapid,
    Robust,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.slic.validate()?;
        self.crf.validate()?;
        for (name, v) in [
            ("overlap_threshold", self.overlap_threshold),
            ("guards.min_occupancy", self.guards.min_occupancy),
            ("guards.min_iou", self.guards.min_iou),
            (
                "embedding.bank_overlap_threshold",
                self.embedding.bank_overlap_threshold,
            ),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must be in [0, 1], got {v}")));
            }
        }
        if self.embedding.robust_iterations == 0 {
            return Err(Error::param("embedding.robust_iterations", "must be at least 1"));
        }
        if self.embedding.bank_max_segments == 0 {
            return Err(Error::param("embedding.bank_max_segments", "must be at least 1"));
        }
        Ok(())
    }

    /// Parses JSON text. Relative paths stay as written.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(bank) = &mut cfg.embedding.bank {
            resolve(bank);
        }
        if let ExtractorConfig::Onnx { model, metadata } = &mut cfg.embedding.extractor {
            resolve(model);
            resolve(metadata);
        }
        Ok(cfg)
    }

    /// Keys that must be set for `variant` but are not.
    pub fn missing_keys(&self, variant: Variant) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if variant == Variant::Robust && self.embedding.bank.is_none() {
            missing.push("embedding.bank");
        }
        missing
    }

    /// Settings for building a bank with this config.
    pub fn bank_params(&self) -> BankParams {
        BankParams {
            slic: SlicParams {
                max_segments: self.embedding.bank_max_segments,
                ..self.slic.clone()
            },
            overlap_threshold: self.embedding.bank_overlap_threshold,
            patch_mode: self.embedding.patch_mode,
        }
    }
}

/// Outcome of [`apply_guards`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardDecision {
    /// The refined mask was kept.
    Accepted,
    /// The box covers too little of the image.
    LowOccupancy,
    /// The refined mask overlaps the box too little.
    LowIou,
}

impl GuardDecision {
    pub fn triggered(self) -> bool {
        self != Self::Accepted
    }
}

/// Decides whether `pseudo` survives the guards.
pub fn guard_decision(pseudo: &BinaryMask, box_mask: &BinaryMask, guards: &GuardParams) -> Result<GuardDecision> {
    ensure_same_dims(box_mask.dims(), pseudo.dims())?;
    Ok(if mask_occupancy(box_mask) < guards.min_occupancy {
        GuardDecision::LowOccupancy
    } else if iou(pseudo, box_mask)? < guards.min_iou {
        GuardDecision::LowIou
    } else {
        GuardDecision::Accepted
    })
}

/// Returns `box_mask` if either guard fires, `pseudo` otherwise.
pub fn apply_guards(pseudo: &BinaryMask, box_mask: &BinaryMask, guards: &GuardParams) -> Result<BinaryMask> {
    Ok(match guard_decision(pseudo, box_mask, guards)? {
        GuardDecision::Accepted => pseudo.clone(),
        _ => box_mask.clone(),
    })
}

/// One boundary pass of the robust variant.
#[derive(Clone, Debug, PartialEq)]
pub struct ReassignPass {
    /// Foreground superpixels touching the background before the pass.
    pub candidates: BTreeSet<u32>,
    /// Those moved to the background.
    pub removed: BTreeSet<u32>,
}

/// Every intermediate result of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub segments: SuperpixelMap,
    /// Assignment straight from the box.
    pub initial: LabelSets,
    /// Empty for the rapid variant.
    pub passes: Vec<ReassignPass>,
    /// Assignment handed to the CRF.
    pub sets: LabelSets,
    pub pre_crf: BinaryMask,
    pub refinement: Refinement,
    pub guard: GuardDecision,
    /// Final output.
    pub mask: BinaryMask,
}

fn check_inputs(image: &RgbImage, box_mask: &BinaryMask, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    ensure_same_dims(image.dims(), box_mask.dims())?;
    if !box_mask.has_foreground() {
        return Err(Error::EmptyBoxMask);
    }
    Ok(())
}

fn finish(
    image: &RgbImage,
    box_mask: &BinaryMask,
    cfg: &PipelineConfig,
    segments: SuperpixelMap,
    initial: LabelSets,
    passes: Vec<ReassignPass>,
    sets: LabelSets,
) -> Result<Trace> {
    let pre_crf = sets_to_mask(&segments, &sets)?;
    let unary = unary_from_mask(&pre_crf, cfg.crf.unary_confidence)?;
    let refinement = mean_field_refine(image, &unary, &cfg.crf)?;
    let guard = guard_decision(&refinement.mask, box_mask, &cfg.guards)?;
    let mask = if guard.triggered() {
        box_mask.clone()
    } else {
        refinement.mask.clone()
    };
    Ok(Trace {
        segments,
        initial,
        passes,
        sets,
        pre_crf,
        refinement,
        guard,
        mask,
    })
}

/// Rapid variant, returning every intermediate.
pub fn rapid_boxshrink_traced(image: &RgbImage, box_mask: &BinaryMask, cfg: &PipelineConfig) -> Result<Trace> {
    check_inputs(image, box_mask, cfg)?;
    let segments = slic_segment(image, &cfg.slic)?;
    let initial = overlap_assign(&segments, box_mask, cfg.overlap_threshold)?;
    let sets = initial.clone();
    finish(image, box_mask, cfg, segments, initial, Vec::new(), sets)
}

/// Superpixels inside the box, refined by the CRF, guarded.
pub fn rapid_boxshrink(image: &RgbImage, box_mask: &BinaryMask, cfg: &PipelineConfig) -> Result<BinaryMask> {
    Ok(rapid_boxshrink_traced(image, box_mask, cfg)?.mask)
}

/// Robust variant, returning every intermediate.
pub fn robust_boxshrink_traced(
    image: &RgbImage,
    box_mask: &BinaryMask,
    bank: &EmbeddingBank,
    extractor: &dyn FeatureExtractor,
    cfg: &PipelineConfig,
) -> Result<Trace> {
    check_inputs(image, box_mask, cfg)?;
    bank.validate()?;
    bank.check_compatible(extractor)
        .map_err(|e| Error::Config(format!("bank does not match the configured extractor: {e}")))?;
    let segments = slic_segment(image, &cfg.slic)?;
    let initial = overlap_assign(&segments, box_mask, cfg.overlap_threshold)?;
    let mut sets = initial.clone();
    let mut passes = Vec::with_capacity(cfg.embedding.robust_iterations);
    for _ in 0..cfg.embedding.robust_iterations {
        let candidates = boundary_foreground(&segments, &sets)?;
        let next = reassign_boundary(
            image,
            &segments,
            &sets,
            &candidates,
            extractor,
            bank,
            cfg.embedding.patch_mode,
        )?;
        let removed = sets.foreground.difference(&next.foreground).copied().collect();
        passes.push(ReassignPass { candidates, removed });
        sets = next;
    }
    finish(image, box_mask, cfg, segments, initial, passes, sets)
}

/// Like [`rapid_boxshrink`], but boundary superpixels closer to the mean
/// background embedding than to the mean foreground one are dropped first.
pub fn robust_boxshrink(
    image: &RgbImage,
    box_mask: &BinaryMask,
    bank: &EmbeddingBank,
    extractor: &dyn FeatureExtractor,
    cfg: &PipelineConfig,
) -> Result<BinaryMask> {
    Ok(robust_boxshrink_traced(image, box_mask, bank, extractor, cfg)?.mask)
}
