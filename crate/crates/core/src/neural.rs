//! Network-backed feature extraction.
//!
//! The network itself comes from the user; this module reads its sidecar
//! metadata and turns patches into normalized input tensors. Inference needs
//! the `onnx` cargo feature.

use std::path::Path;

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};

use crate::embedding::{FeatureExtractor, Patch};
use crate::error::{Error, Result};

/// Sidecar describing what the network expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    /// Reported as the extractor name; banks remember it.
    pub name: String,
    pub input_width: u32,
    pub input_height: u32,
    /// Per-channel mean and std applied to values scaled to `[0, 1]`.
    pub mean: [f32; 3],
    pub std: [f32; 3],
    /// Length of the flattened network output.
    pub output_dim: usize,
}

impl ModelMetadata {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.input_height == 0 {
            return Err(Error::Extractor("model input size must be positive".into()));
        }
        if self.output_dim == 0 {
            return Err(Error::Extractor("model output_dim must be positive".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Extractor("normalization std must be positive and finite".into()));
        }
        Ok(())
    }

    /// Resizes the patch to the model input (bilinear) and normalizes it into
    /// a `1 x 3 x H x W` row-major tensor.
    pub fn preprocess(&self, patch: &Patch) -> Vec<f32> {
        let (w, h) = patch.image.dims();
        let src = image::RgbImage::from_raw(w, h, patch.image.as_raw().to_vec()).expect("buffer matches dims");
        let resized = if (w, h) == (self.input_width, self.input_height) {
            src
        } else {
            imageops::resize(&src, self.input_width, self.input_height, FilterType::Triangle)
        };
        let plane = (self.input_width * self.input_height) as usize;
        let mut out = vec![0.0f32; 3 * plane];
        for (i, p) in resized.pixels().enumerate() {
            for c in 0..3 {
                out[c * plane + i] = (p.0[c] as f32 / 255.0 - self.mean[c]) / self.std[c];
            }
        }
        out
    }
}

/// Builds the extractor for `model` described by `metadata`.
pub fn load_extractor(model: &Path, metadata: &Path) -> Result<Box<dyn FeatureExtractor>> {
    let meta = ModelMetadata::load(metadata)?;
    if !model.is_file() {
        return Err(Error::Extractor(format!(
            "model file {} does not exist",
            model.display()
        )));
    }
    backend::load(model, meta)
}

#[cfg(feature = "onnx")]
mod backend {
    use super::*;
    use tract_onnx::prelude::*;

    type Plan = SimplePlan<TypedFact, Box<dyn TypedOp>, Graph<TypedFact, Box<dyn TypedOp>>>;

    pub(super) struct OnnxExtractor {
        meta: ModelMetadata,
        plan: Plan,
    }

    pub(super) fn load(model: &Path, meta: ModelMetadata) -> Result<Box<dyn FeatureExtractor>> {
        let err = |e: TractError| Error::Extractor(format!("{}: {e}", model.display()));
        let shape = tvec!(1, 3, meta.input_height as usize, meta.input_width as usize);
        let plan = tract_onnx::onnx()
            .model_for_path(model)
            .map_err(err)?
            .with_input_fact(0, f32::fact(shape).into())
            .map_err(err)?
            .into_optimized()
            .map_err(err)?
            .into_runnable()
            .map_err(err)?;
        Ok(Box::new(OnnxExtractor { meta, plan }))
    }

    impl FeatureExtractor for OnnxExtractor {
        fn name(&self) -> &str {
            &self.meta.name
        }

        fn output_dim(&self) -> usize {
            self.meta.output_dim
        }

        fn extract(&self, patch: &Patch) -> Result<Vec<f64>> {
            let (w, h) = (self.meta.input_width as usize, self.meta.input_height as usize);
            let input = tract_ndarray::Array4::from_shape_vec((1, 3, h, w), self.meta.preprocess(patch))
                .map_err(|e| Error::Extractor(e.to_string()))?;
            let out = self
                .plan
                .run(tvec!(Tensor::from(input).into()))
                .map_err(|e| Error::Extractor(e.to_string()))?;
            let view = out[0]
                .to_array_view::<f32>()
                .map_err(|e| Error::Extractor(e.to_string()))?;
            Ok(view.iter().map(|&v| v as f64).collect())
        }
    }
}

#[cfg(not(feature = "onnx"))]
mod backend {
    use super::*;

    pub(super) fn load(model: &Path, _meta: ModelMetadata) -> Result<Box<dyn FeatureExtractor>> {
        Err(Error::Extractor(format!(
            "cannot run {}: this build has no ONNX runtime (enable the `onnx` feature)",
            model.display()
        )))
    }
}
