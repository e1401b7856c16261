//! Bounding boxes and their conversions to and from masks.
//!
//! Coordinates are inclusive on both ends: a box `(1, 1, 2, 2)` covers four
//! pixels.

use serde::{Deserialize, Serialize};

use crate::components::{label_regions, UNLABELED};
use crate::error::{Error, Result};
use crate::image::BinaryMask;

/// Axis-aligned rectangle with inclusive pixel coordinates.
///
/// Serializes as a `[x_min, y_min, x_max, y_max]` array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self> {
        Self::try_from([x_min as i64, y_min as i64, x_max as i64, y_max as i64])
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    /// Checks that the box lies inside a `width` x `height` image.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.x_max >= width {
            return Err(Error::BoxOutOfBounds {
                coordinate: "x_max",
                value: self.x_max as i64,
                limit: width,
            });
        }
        if self.y_max >= height {
            return Err(Error::BoxOutOfBounds {
                coordinate: "y_max",
                value: self.y_max as i64,
                limit: height,
            });
        }
        Ok(())
    }
}

impl TryFrom<[i64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(c: [i64; 4]) -> Result<Self> {
        const NAMES: [&str; 4] = ["x_min", "y_min", "x_max", "y_max"];
        for (name, &v) in NAMES.iter().zip(&c) {
            if !(0..=u32::MAX as i64).contains(&v) {
                return Err(Error::BoxOutOfBounds {
                    coordinate: name,
                    value: v,
                    limit: 0,
                });
            }
        }
        if c[0] > c[2] {
            return Err(Error::BoxOutOfBounds {
                coordinate: "x_min",
                value: c[0],
                limit: c[2] as u32,
            });
        }
        if c[1] > c[3] {
            return Err(Error::BoxOutOfBounds {
                coordinate: "y_min",
                value: c[1],
                limit: c[3] as u32,
            });
        }
        Ok(Self {
            x_min: c[0] as u32,
            y_min: c[1] as u32,
            x_max: c[2] as u32,
            y_max: c[3] as u32,
        })
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Rasterizes a single box.
pub fn bbox_to_mask(bbox: BoundingBox, width: u32, height: u32) -> Result<BinaryMask> {
    boxes_to_mask(&[bbox], width, height)
}

/// Union of all box rectangles. An empty list gives an all-zero mask.
pub fn boxes_to_mask(boxes: &[BoundingBox], width: u32, height: u32) -> Result<BinaryMask> {
    for b in boxes {
        b.validate(width, height)?;
    }
    let mut mask = BinaryMask::zeros(width, height);
    for b in boxes {
        for y in b.y_min..=b.y_max {
            for x in b.x_min..=b.x_max {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// One tight box per 4-connected foreground component, sorted by
/// `(y_min, x_min)`.
pub fn mask_to_bboxes(mask: &BinaryMask) -> Vec<BoundingBox> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let (labels, count) = label_regions(w, h, mask.as_raw(), |&v| v == 1);
    let mut boxes: Vec<Option<BoundingBox>> = vec![None; count];
    for (i, &l) in labels.iter().enumerate() {
        if l == UNLABELED {
            continue;
        }
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let b = boxes[l as usize].get_or_insert(BoundingBox {
            x_min: x,
            y_min: y,
            x_max: x,
            y_max: y,
        });
        b.x_min = b.x_min.min(x);
        b.y_min = b.y_min.min(y);
        b.x_max = b.x_max.max(x);
        b.y_max = b.y_max.max(y);
    }
    let mut boxes: Vec<BoundingBox> = boxes.into_iter().flatten().collect();
    boxes.sort_by_key(|b| (b.y_min, b.x_min, b.y_max, b.x_max));
    boxes
}

/// Fraction of the image covered by foreground.
pub fn mask_occupancy(mask: &BinaryMask) -> f64 {
    mask.count_ones() as f64 / mask.len() as f64
}
