use super::{CrfParams, UnaryPotentials};
use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, BinaryMask, RgbImage};

/// Default pixel budget for exact energy evaluation (64x64).
pub const DEFAULT_EXACT_PIXEL_LIMIT: usize = 64 * 64;

/// Exact Gibbs energy of `labeling`: unary costs plus the Potts-weighted
/// kernel over every unordered pixel pair. Refuses images above
/// [`DEFAULT_EXACT_PIXEL_LIMIT`] pixels.
pub fn gibbs_energy(
    labeling: &BinaryMask,
    unary: &UnaryPotentials,
    image: &RgbImage,
    params: &CrfParams,
) -> Result<f64> {
    gibbs_energy_bounded(labeling, unary, image, params, DEFAULT_EXACT_PIXEL_LIMIT)
}

/// [`gibbs_energy`] with an explicit pixel limit.
pub fn gibbs_energy_bounded(
    labeling: &BinaryMask,
    unary: &UnaryPotentials,
    image: &RgbImage,
    params: &CrfParams,
    max_pixels: usize,
) -> Result<f64> {
    ensure_same_dims(image.dims(), labeling.dims())?;
    ensure_same_dims(image.dims(), unary.dims())?;
    if image.len() > max_pixels {
        return Err(Error::ImageTooLarge {
            width: image.width(),
            height: image.height(),
            limit: max_pixels,
        });
    }
    let labels = labeling.as_raw();
    let unary_sum: f64 = unary.costs().iter().zip(labels).map(|(c, &l)| c[l as usize]).sum();

    let w = image.width() as usize;
    let pos = |i: usize| ((i % w) as f64, (i / w) as f64);
    let mut pairwise = 0.0;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] != labels[j] {
                pairwise += params.kernel(pos(i), image.pixel_at(i), pos(j), image.pixel_at(j));
            }
        }
    }
    Ok(unary_sum + pairwise)
}
