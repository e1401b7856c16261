//! Fully-connected CRF with Gaussian and bilateral pairwise kernels.
//!
//! The model over binary labelings `x` is
//!
//! ```text
//! E(x) = sum_i U_i(x_i) + sum_{i<j} [x_i != x_j] * k(i, j)
//! k(i, j) = w_g * exp(-|p_i - p_j|^2 / 2 sxy_g^2)
//!         + w_b * exp(-|p_i - p_j|^2 / 2 sxy_b^2 - |c_i - c_j|^2 / 2 srgb^2)
//! ```
//!
//! with pixel positions `p` and raw sRGB colors `c`. Inference is mean field:
//! starting from `Q = softmax(-U)`, each step passes messages through both
//! kernels, applies the Potts compatibility and renormalizes.
//!
//! [`mean_field_refine`] filters with a separable convolution (spatial kernel)
//! and a permutohedral lattice (bilateral kernel), which is linear in the
//! number of pixels. [`dense::mean_field_refine_dense`] evaluates every pixel
//! pair exactly and only accepts small images.

pub mod dense;
mod energy;
pub(crate) mod lattice;
mod spatial;

use serde::{Deserialize, Serialize};

pub use energy::{gibbs_energy, gibbs_energy_bounded, DEFAULT_EXACT_PIXEL_LIMIT};

use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, BinaryMask, RgbImage};
use lattice::PermutohedralLattice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfParams {
    pub gaussian_sxy: f64,
    pub gaussian_weight: f64,
    pub bilateral_sxy: f64,
    pub bilateral_srgb: f64,
    pub bilateral_weight: f64,
    pub iterations: usize,
    /// Probability given to the mask label when building unaries.
    pub unary_confidence: f64,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            gaussian_sxy: 5.0,
            gaussian_weight: 3.0,
            bilateral_sxy: 25.0,
            bilateral_srgb: 10.0,
            bilateral_weight: 10.0,
            iterations: 5,
            unary_confidence: 0.9,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gaussian_sxy", self.gaussian_sxy),
            ("bilateral_sxy", self.bilateral_sxy),
            ("bilateral_srgb", self.bilateral_srgb),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "standard deviations must be positive"));
            }
        }
        for (name, v) in [
            ("gaussian_weight", self.gaussian_weight),
            ("bilateral_weight", self.bilateral_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "weights must be non-negative"));
            }
        }
        check_confidence(self.unary_confidence)
    }

    /// Pairwise weight `k(i, j)` between two pixels.
    pub fn kernel(&self, pi: (f64, f64), ci: [u8; 3], pj: (f64, f64), cj: [u8; 3]) -> f64 {
        let d2 = (pi.0 - pj.0).powi(2) + (pi.1 - pj.1).powi(2);
        let c2: f64 = ci.iter().zip(&cj).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
        let g = self.gaussian_weight * (-d2 / (2.0 * self.gaussian_sxy.powi(2))).exp();
        let b = self.bilateral_weight
            * (-d2 / (2.0 * self.bilateral_sxy.powi(2)) - c2 / (2.0 * self.bilateral_srgb.powi(2))).exp();
        g + b
    }

    fn has_pairwise(&self) -> bool {
        self.gaussian_weight > 0.0 || self.bilateral_weight > 0.0
    }
}

fn check_confidence(p: f64) -> Result<()> {
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::param("unary_confidence", format!("{p} is outside (0.5, 1)")));
    }
    Ok(())
}

/// Per-pixel label costs `[background, foreground]` as negative log
/// probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct UnaryPotentials {
    width: u32,
    height: u32,
    costs: Vec<[f64; 2]>,
}

impl UnaryPotentials {
    pub fn new(width: u32, height: u32, costs: Vec<[f64; 2]>) -> Result<Self> {
        if costs.len() != width as usize * height as usize {
            return Err(Error::InvalidData(format!(
                "{} unary entries for a {width}x{height} image",
                costs.len()
            )));
        }
        if costs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidData("unary costs must be finite".into()));
        }
        Ok(Self { width, height, costs })
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn costs(&self) -> &[[f64; 2]] {
        &self.costs
    }

    /// Label with the lower cost at every pixel (background on ties).
    pub fn argmin_mask(&self) -> BinaryMask {
        let data = self.costs.iter().map(|c| (c[1] < c[0]) as u8).collect();
        BinaryMask::new(self.width, self.height, data).expect("dims checked at construction")
    }
}

/// Unaries that trust `mask` with probability `confidence`.
pub fn unary_from_mask(mask: &BinaryMask, confidence: f64) -> Result<UnaryPotentials> {
    check_confidence(confidence)?;
    let agree = -confidence.ln();
    let disagree = -(1.0 - confidence).ln();
    let costs = mask
        .as_raw()
        .iter()
        .map(|&l| if l == 1 { [disagree, agree] } else { [agree, disagree] })
        .collect();
    UnaryPotentials::new(mask.width(), mask.height(), costs)
}

/// Per-pixel label distributions `[P(background), P(foreground)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    width: u32,
    height: u32,
    probs: Vec<[f64; 2]>,
}

impl Marginals {
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn probabilities(&self) -> &[[f64; 2]] {
        &self.probs
    }

    pub fn foreground(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p[1]).collect()
    }

    /// Most probable label per pixel (background on ties).
    pub fn argmax_mask(&self) -> BinaryMask {
        let data = self.probs.iter().map(|p| (p[1] > p[0]) as u8).collect();
        BinaryMask::new(self.width, self.height, data).expect("dims checked at construction")
    }

    /// Foreground probability as 8-bit gray levels.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.probs
            .iter()
            .map(|p| (p[1] * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Output of mean-field inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub mask: BinaryMask,
    pub marginals: Marginals,
}

/// Computes `sum_m w_m sum_{j != i} k_m(i, j) v_j` for every pixel.
pub(crate) trait MessagePassing {
    fn messages(&self, values: &[f64]) -> Vec<f64>;
}

struct FastFilter {
    width: usize,
    height: usize,
    gaussian_sxy: f64,
    gaussian_weight: f64,
    bilateral_weight: f64,
    /// The lattice and its response to each pixel's own value.
    lattice: Option<(PermutohedralLattice, Vec<f64>)>,
}

impl FastFilter {
    fn new(image: &RgbImage, params: &CrfParams) -> Self {
        let lattice = (params.bilateral_weight > 0.0).then(|| {
            let w = image.width() as usize;
            let mut features = Vec::with_capacity(image.len() * 5);
            for (i, c) in image.pixels().enumerate() {
                features.push((i % w) as f64 / params.bilateral_sxy);
                features.push((i / w) as f64 / params.bilateral_sxy);
                features.extend(c.iter().map(|&v| v as f64 / params.bilateral_srgb));
            }
            let lattice = PermutohedralLattice::new(&features, 5);
            let own = lattice.self_response();
            (lattice, own)
        });
        Self {
            width: image.width() as usize,
            height: image.height() as usize,
            gaussian_sxy: params.gaussian_sxy,
            gaussian_weight: params.gaussian_weight,
            bilateral_weight: params.bilateral_weight,
            lattice,
        }
    }
}

impl MessagePassing for FastFilter {
    fn messages(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        if self.gaussian_weight > 0.0 {
            let g = spatial::gaussian_sum(values, self.width, self.height, self.gaussian_sxy);
            for ((o, s), v) in out.iter_mut().zip(g).zip(values) {
                *o += self.gaussian_weight * (s - v);
            }
        }
        if let Some((lattice, own)) = &self.lattice {
            let b = lattice.filter(values);
            for (((o, s), v), c) in out.iter_mut().zip(b).zip(values).zip(own) {
                *o += self.bilateral_weight * (s - c * v);
            }
        }
        out
    }
}

fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let z = ea + eb;
    [ea / z, eb / z]
}

/// Runs mean field and hands every intermediate `Q` (starting with the
/// initial one) to `observe`.
pub(crate) fn run_mean_field(
    unary: &UnaryPotentials,
    filter: Option<&dyn MessagePassing>,
    iterations: usize,
    mut observe: impl FnMut(&[[f64; 2]]),
) -> Marginals {
    let mut q: Vec<[f64; 2]> = unary.costs.iter().map(|c| softmax2(-c[0], -c[1])).collect();
    observe(&q);
    if let Some(filter) = filter {
        for _ in 0..iterations {
            // With Potts compatibility only Q(fg) - Q(bg) matters for the
            // relative label energies.
            let diff: Vec<f64> = q.iter().map(|p| p[1] - p[0]).collect();
            let msg = filter.messages(&diff);
            for ((p, c), m) in q.iter_mut().zip(&unary.costs).zip(msg) {
                *p = softmax2(-c[0], -c[1] + m);
            }
            observe(&q);
        }
    }
    Marginals {
        width: unary.width,
        height: unary.height,
        probs: q,
    }
}

fn check_inputs(image: &RgbImage, unary: &UnaryPotentials, params: &CrfParams) -> Result<()> {
    params.validate()?;
    ensure_same_dims(image.dims(), unary.dims())
}

/// Mean-field refinement with linear-time filtering.
///
/// With both kernel weights at zero (or zero iterations) the output mask is the
/// unary argmin exactly.
pub fn mean_field_refine(image: &RgbImage, unary: &UnaryPotentials, params: &CrfParams) -> Result<Refinement> {
    check_inputs(image, unary, params)?;
    let filter = (params.has_pairwise() && params.iterations > 0).then(|| FastFilter::new(image, params));
    let marginals = run_mean_field(
        unary,
        filter.as_ref().map(|f| f as &dyn MessagePassing),
        params.iterations,
        |_| {},
    );
    Ok(Refinement {
        mask: marginals.argmax_mask(),
        marginals,
    })
}

/// Like [`mean_field_refine`] but returns the marginals after every iteration,
/// starting with the initial `softmax(-U)`.
pub fn mean_field_history(image: &RgbImage, unary: &UnaryPotentials, params: &CrfParams) -> Result<Vec<Marginals>> {
    check_inputs(image, unary, params)?;
    let filter = (params.has_pairwise() && params.iterations > 0).then(|| FastFilter::new(image, params));
    let mut history = Vec::new();
    run_mean_field(
        unary,
        filter.as_ref().map(|f| f as &dyn MessagePassing),
        params.iterations,
        |q| {
            history.push(Marginals {
                width: unary.width,
                height: unary.height,
                probs: q.to_vec(),
            })
        },
    );
    Ok(history)
}
