//! SLIC superpixels: localized k-means over `(L, a, b, x, y)`.
//!
//! Centers start on a regular grid with interval `S = sqrt(area / s)` and are
//! nudged to the lowest-gradient pixel of their 3x3 neighborhood. Each
//! iteration only compares a center against pixels within `S` of it along both
//! axes, using
//!
//! ```text
//! D^2 = d_lab^2 + (m / S)^2 * d_xy^2
//! ```
//!
//! No randomness is involved, so the same image and parameters always give the
//! same map. On exactly equal distances the lower center id wins.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::color::srgb_to_lab;
use crate::components::{label_regions, neighbors4};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::superpixel::SuperpixelMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicParams {
    /// Upper bound on the number of segments returned.
    pub max_segments: usize,
    /// Weight of spatial against color distance.
    pub compactness: f64,
    pub max_iterations: usize,
    pub enforce_connectivity: bool,
    /// Fragments below this fraction of the nominal segment area
    /// (`area / max_segments`) are merged into a neighbor.
    pub min_segment_fraction: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            max_segments: 200,
            compactness: 10.0,
            max_iterations: 10,
            enforce_connectivity: true,
            min_segment_fraction: 0.25,
        }
    }
}

impl SlicParams {
    pub fn with_segments(max_segments: usize) -> Self {
        Self {
            max_segments,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_segments < 1 {
            return Err(Error::param("max_segments", "must be at least 1"));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(Error::param("compactness", "must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        if !(self.min_segment_fraction > 0.0 && self.min_segment_fraction < 1.0) {
            return Err(Error::param("min_segment_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Segments `image` into at most `params.max_segments` superpixels.
pub fn slic_segment(image: &RgbImage, params: &SlicParams) -> Result<SuperpixelMap> {
    params.validate()?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = w * h;
    if params.max_segments > n {
        return Err(Error::param(
            "max_segments",
            format!("{} exceeds the pixel count {n}", params.max_segments),
        ));
    }

    let lab: Vec<[f64; 3]> = image.pixels().map(srgb_to_lab).collect();
    let step = (n as f64 / params.max_segments as f64).sqrt();
    let (nx, ny) = grid_shape(w, h, step, params.max_segments);

    let mut centers = initial_centers(&lab, w, h, nx, ny);
    let mut labels: Vec<u32> = (0..n)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            ((y * ny / h) * nx + x * nx / w) as u32
        })
        .collect();

    let spatial_weight = (params.compactness / step).powi(2);
    let radius = step.ceil() as i64;
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.max_iterations {
        dist.fill(f64::INFINITY);
        let mut changed = false;
        for (k, c) in centers.iter().enumerate() {
            let cx = c.x.round() as i64;
            let cy = c.y.round() as i64;
            let x0 = (cx - radius).max(0) as usize;
            let x1 = (cx + radius).min(w as i64 - 1) as usize;
            let y0 = (cy - radius).max(0) as usize;
            let y1 = (cy + radius).min(h as i64 - 1) as usize;
            for y in y0..=y1 {
                let dy = y as f64 - c.y;
                for x in x0..=x1 {
                    let i = y * w + x;
                    let dx = x as f64 - c.x;
                    let p = lab[i];
                    let dl = p[0] - c.lab[0];
                    let da = p[1] - c.lab[1];
                    let db = p[2] - c.lab[2];
                    let d = dl * dl + da * da + db * db + spatial_weight * (dx * dx + dy * dy);
                    if d < dist[i] {
                        dist[i] = d;
                        if labels[i] != k as u32 {
                            labels[i] = k as u32;
                            changed = true;
                        }
                    }
                }
            }
        }
        update_centers(&mut centers, &labels, &lab, w);
        if !changed {
            break;
        }
    }

    if params.enforce_connectivity {
        let min_size = params.min_segment_fraction * n as f64 / params.max_segments as f64;
        labels = enforce_connectivity(&labels, w, h, min_size);
    }
    Ok(SuperpixelMap::compact(image.width(), image.height(), labels))
}

/// Grid of `nx * ny <= max_segments` centers with spacing close to `step`.
fn grid_shape(w: usize, h: usize, step: f64, max_segments: usize) -> (usize, usize) {
    let mut nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let mut ny = ((h as f64 / step).round() as usize).clamp(1, h);
    while nx * ny > max_segments {
        if nx >= ny {
            nx -= 1;
        } else {
            ny -= 1;
        }
    }
    (nx, ny)
}

fn initial_centers(lab: &[[f64; 3]], w: usize, h: usize, nx: usize, ny: usize) -> Vec<Center> {
    let at = |x: usize, y: usize| lab[y * w + x];
    let gradient = |x: usize, y: usize| {
        let l = at(x.saturating_sub(1), y);
        let r = at((x + 1).min(w - 1), y);
        let u = at(x, y.saturating_sub(1));
        let d = at(x, (y + 1).min(h - 1));
        sq_dist(&r, &l) + sq_dist(&d, &u)
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let x = ((gx as f64 + 0.5) * w as f64 / nx as f64) as usize;
            let y = ((gy as f64 + 0.5) * h as f64 / ny as f64) as usize;
            let (mut bx, mut by) = (x, y);
            let mut best = gradient(x, y);
            for py in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for px in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let g = gradient(px, py);
                    if g < best {
                        best = g;
                        (bx, by) = (px, py);
                    }
                }
            }
            centers.push(Center {
                lab: at(bx, by),
                x: bx as f64,
                y: by as f64,
            });
        }
    }
    centers
}

fn update_centers(centers: &mut [Center], labels: &[u32], lab: &[[f64; 3]], w: usize) {
    let mut sums = vec![[0.0f64; 6]; centers.len()];
    for (i, (&l, p)) in labels.iter().zip(lab).enumerate() {
        let s = &mut sums[l as usize];
        s[0] += p[0];
        s[1] += p[1];
        s[2] += p[2];
        s[3] += (i % w) as f64;
        s[4] += (i / w) as f64;
        s[5] += 1.0;
    }
    for (c, s) in centers.iter_mut().zip(&sums) {
        if s[5] > 0.0 {
            let n = s[5];
            *c = Center {
                lab: [s[0] / n, s[1] / n, s[2] / n],
                x: s[3] / n,
                y: s[4] / n,
            };
        }
    }
}

/// Keeps the largest 4-connected piece of every cluster (if it is not below
/// `min_size`) and merges all other pieces into the neighbor with which they
/// share the longest border. The result never has more segments than the
/// input has clusters.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: f64) -> Vec<u32> {
    let (comp, ncomp) = label_regions(w, h, labels, |_| true);
    let mut size = vec![0usize; ncomp];
    let mut cluster_of = vec![0u32; ncomp];
    for (i, &c) in comp.iter().enumerate() {
        size[c as usize] += 1;
        cluster_of[c as usize] = labels[i];
    }

    // Largest piece per cluster; components are numbered in raster order of
    // their first pixel, so ties go to the earlier one.
    let mut primary: HashMap<u32, usize> = HashMap::new();
    for c in 0..ncomp {
        primary
            .entry(cluster_of[c])
            .and_modify(|best| {
                if size[c] > size[*best] {
                    *best = c;
                }
            })
            .or_insert(c);
    }

    let mut owner: Vec<Option<u32>> = vec![None; ncomp];
    for &c in primary.values() {
        if size[c] as f64 >= min_size {
            owner[c] = Some(c as u32);
        }
    }
    if owner.iter().all(Option::is_none) {
        let largest = (0..ncomp).max_by_key(|&c| (size[c], std::cmp::Reverse(c))).unwrap();
        owner[largest] = Some(largest as u32);
    }

    // Border length between adjacent components, keyed by component pair.
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ncomp];
    {
        let mut border: HashMap<(usize, usize), usize> = HashMap::new();
        for i in 0..comp.len() {
            for j in neighbors4(i, w, h) {
                let (a, b) = (comp[i] as usize, comp[j] as usize);
                if a != b {
                    *border.entry((a, b)).or_default() += 1;
                }
            }
        }
        let mut pairs: Vec<_> = border.into_iter().collect();
        pairs.sort_unstable();
        for ((a, b), len) in pairs {
            adjacency[a].push((b, len));
        }
    }

    let mut pending: Vec<usize> = (0..ncomp).filter(|&c| owner[c].is_none()).collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &c in &pending {
            let mut per_label: Vec<(u32, usize)> = Vec::new();
            for &(nb, len) in &adjacency[c] {
                if let Some(l) = owner[nb] {
                    match per_label.iter_mut().find(|(x, _)| *x == l) {
                        Some(e) => e.1 += len,
                        None => per_label.push((l, len)),
                    }
                }
            }
            let target = per_label
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(l, _)| l);
            match target {
                Some(l) => owner[c] = Some(l),
                None => still.push(c),
            }
        }
        assert!(still.len() < pending.len(), "disconnected grid");
        pending = still;
    }

    comp.iter().map(|&c| owner[c as usize].unwrap()).collect()
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}
