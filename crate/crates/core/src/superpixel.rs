//! Superpixel label maps.

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

/// Per-pixel segment ids forming a partition of the image.
///
/// Ids are contiguous: every id in `0..num_segments()` owns at least one pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    num_segments: usize,
}

/// Summary of one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentStats {
    pub pixel_count: usize,
    /// Mean `(x, y)` position.
    pub centroid: (f64, f64),
    pub bounds: BoundingBox,
}

impl SuperpixelMap {
    /// Wraps a label buffer, checking that ids are contiguous from zero.
    pub fn from_labels(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width as usize * height as usize {
            return Err(Error::InvalidData(format!(
                "label buffer of {} entries does not match {width}x{height}",
                labels.len()
            )));
        }
        let k = labels.iter().max().map_or(0, |&m| m as usize + 1);
        let mut present = vec![false; k];
        for &l in &labels {
            present[l as usize] = true;
        }
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(Error::InvalidData(format!(
                "segment ids are not contiguous: id {missing} is unused"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            num_segments: k,
        })
    }

    /// Relabels arbitrary ids to `0..K` in order of first appearance.
    pub(crate) fn compact(width: u32, height: u32, mut labels: Vec<u32>) -> Self {
        let mut remap = std::collections::HashMap::new();
        for l in labels.iter_mut() {
            let next = remap.len() as u32;
            *l = *remap.entry(*l).or_insert(next);
        }
        Self {
            width,
            height,
            num_segments: remap.len(),
            labels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn check_segment(&self, id: u32) -> Result<()> {
        if (id as usize) < self.num_segments {
            Ok(())
        } else {
            Err(Error::UnknownSegment(id))
        }
    }

    /// Pixel count per segment.
    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_segments];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Size, centroid and bounding rectangle of every segment, indexed by id.
    pub fn segment_stats(&self) -> Vec<SegmentStats> {
        let w = self.width as usize;
        let mut acc: Vec<(usize, f64, f64, [u32; 4])> =
            vec![(0, 0.0, 0.0, [u32::MAX, u32::MAX, 0, 0]); self.num_segments];
        for (i, &l) in self.labels.iter().enumerate() {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            let a = &mut acc[l as usize];
            a.0 += 1;
            a.1 += x as f64;
            a.2 += y as f64;
            a.3 = [a.3[0].min(x), a.3[1].min(y), a.3[2].max(x), a.3[3].max(y)];
        }
        acc.into_iter()
            .map(|(n, sx, sy, b)| SegmentStats {
                pixel_count: n,
                centroid: (sx / n as f64, sy / n as f64),
                bounds: BoundingBox {
                    x_min: b[0],
                    y_min: b[1],
                    x_max: b[2],
                    y_max: b[3],
                },
            })
            .collect()
    }
}
