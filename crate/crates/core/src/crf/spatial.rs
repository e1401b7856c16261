//! Separable Gaussian filtering over pixel positions.

/// Sums `exp(-(dx^2 + dy^2) / (2 sigma^2)) * v_j` over all pixels `j` within
/// `ceil(4 sigma)` of `i` along each axis, self term included.
pub(crate) fn gaussian_sum(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    debug_assert_eq!(values.len(), width * height);
    let radius = ((4.0 * sigma).ceil() as usize).max(1);
    let taps: Vec<f64> = (0..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let mut rows = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        let out = &mut rows[y * width..(y + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            *o = (lo..=hi).map(|j| taps[x.abs_diff(j)] * row[j]).sum();
        }
    }

    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(height - 1);
        for yy in lo..=hi {
            let t = taps[y.abs_diff(yy)];
            let src = &rows[yy * width..(yy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    out
}
