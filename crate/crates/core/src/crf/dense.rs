//! Exact mean field by summing over every pixel pair.
//!
//! Quadratic in the pixel count; meant as a reference for the filtered path on
//! small images.

use super::{check_inputs, run_mean_field, CrfParams, Marginals, MessagePassing, Refinement, UnaryPotentials};
use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Largest image (in pixels) accepted by the exact path.
pub const DENSE_PIXEL_LIMIT: usize = 64 * 64;

struct DenseFilter<'a> {
    image: &'a RgbImage,
    params: &'a CrfParams,
}

impl MessagePassing for DenseFilter<'_> {
    fn messages(&self, values: &[f64]) -> Vec<f64> {
        let w = self.image.width() as usize;
        let n = values.len();
        let pos = |i: usize| ((i % w) as f64, (i / w) as f64);
        (0..n)
            .map(|i| {
                let (pi, ci) = (pos(i), self.image.pixel_at(i));
                let mut acc = 0.0;
                for (j, &v) in values.iter().enumerate() {
                    if j != i {
                        acc += self.params.kernel(pi, ci, pos(j), self.image.pixel_at(j)) * v;
                    }
                }
                acc
            })
            .collect()
    }
}

fn check_size(image: &RgbImage) -> Result<()> {
    if image.len() > DENSE_PIXEL_LIMIT {
        return Err(Error::ImageTooLarge {
            width: image.width(),
            height: image.height(),
            limit: DENSE_PIXEL_LIMIT,
        });
    }
    Ok(())
}

/// Exact counterpart of [`super::mean_field_refine`].
pub fn mean_field_refine_dense(image: &RgbImage, unary: &UnaryPotentials, params: &CrfParams) -> Result<Refinement> {
    let history = mean_field_history_dense(image, unary, params)?;
    let marginals = history.into_iter().last().expect("history holds the initial state");
    Ok(Refinement {
        mask: marginals.argmax_mask(),
        marginals,
    })
}

/// Exact marginals after every iteration, starting with `softmax(-U)`.
pub fn mean_field_history_dense(
    image: &RgbImage,
    unary: &UnaryPotentials,
    params: &CrfParams,
) -> Result<Vec<Marginals>> {
    check_inputs(image, unary, params)?;
    check_size(image)?;
    let filter = DenseFilter { image, params };
    let use_filter = params.has_pairwise() && params.iterations > 0;
    let mut history = Vec::new();
    run_mean_field(
        unary,
        use_filter.then_some(&filter as &dyn MessagePassing),
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
