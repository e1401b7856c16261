//! Foreground/background assignment of superpixels against a box mask.

use std::collections::BTreeSet;

use crate::components::neighbors4;
use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, BinaryMask};
use crate::superpixel::SuperpixelMap;

/// A partition of a map's segment ids into foreground and background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSets {
    pub foreground: BTreeSet<u32>,
    pub background: BTreeSet<u32>,
}

impl LabelSets {
    /// Builds the partition from a foreground set; every other id of the
    /// `num_segments` ids becomes background.
    pub fn from_foreground(num_segments: usize, foreground: impl IntoIterator<Item = u32>) -> Result<Self> {
        let foreground: BTreeSet<u32> = foreground.into_iter().collect();
        if let Some(&bad) = foreground.iter().find(|&&id| id as usize >= num_segments) {
            return Err(Error::UnknownSegment(bad));
        }
        let background = (0..num_segments as u32).filter(|id| !foreground.contains(id)).collect();
        Ok(Self { foreground, background })
    }

    pub fn is_foreground(&self, id: u32) -> bool {
        self.foreground.contains(&id)
    }

    /// Checks that the two sets partition the ids of `map`.
    pub fn validate_for(&self, map: &SuperpixelMap) -> Result<()> {
        for &id in self.foreground.iter().chain(&self.background) {
            map.check_segment(id)?;
        }
        if let Some(&id) = self.foreground.intersection(&self.background).next() {
            return Err(Error::InvalidData(format!(
                "segment {id} is both foreground and background"
            )));
        }
        let covered = self.foreground.len() + self.background.len();
        if covered != map.num_segments() {
            return Err(Error::InvalidData(format!(
                "label sets cover {covered} of {} segments",
                map.num_segments()
            )));
        }
        Ok(())
    }
}

/// Fraction of each segment's pixels that lie inside the box mask.
pub fn overlap_fractions(map: &SuperpixelMap, box_mask: &BinaryMask) -> Result<Vec<f64>> {
    ensure_same_dims(map.dims(), box_mask.dims())?;
    let mut inside = vec![0usize; map.num_segments()];
    let mut total = vec![0usize; map.num_segments()];
    for (i, &l) in map.labels().iter().enumerate() {
        total[l as usize] += 1;
        inside[l as usize] += box_mask.as_raw()[i] as usize;
    }
    Ok(inside.iter().zip(&total).map(|(&a, &n)| a as f64 / n as f64).collect())
}

/// A segment is foreground iff the fraction of its own pixels inside the box
/// is at least `threshold`.
pub fn overlap_assign(map: &SuperpixelMap, box_mask: &BinaryMask, threshold: f64) -> Result<LabelSets> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::param("t_s", format!("{threshold} is outside [0, 1]")));
    }
    let fractions = overlap_fractions(map, box_mask)?;
    let mut sets = LabelSets {
        foreground: BTreeSet::new(),
        background: BTreeSet::new(),
    };
    for (id, f) in fractions.into_iter().enumerate() {
        if f >= threshold {
            sets.foreground.insert(id as u32);
        } else {
            sets.background.insert(id as u32);
        }
    }
    Ok(sets)
}

/// Paints every pixel whose segment is in the foreground set.
pub fn sets_to_mask(map: &SuperpixelMap, sets: &LabelSets) -> Result<BinaryMask> {
    sets.validate_for(map)?;
    let mut is_fg = vec![false; map.num_segments()];
    for &id in &sets.foreground {
        is_fg[id as usize] = true;
    }
    let data = map.labels().iter().map(|&l| is_fg[l as usize] as u8).collect();
    BinaryMask::new(map.width(), map.height(), data)
}

/// Foreground segments with at least one pixel 4-adjacent to a background
/// segment.
pub fn boundary_foreground(map: &SuperpixelMap, sets: &LabelSets) -> Result<BTreeSet<u32>> {
    sets.validate_for(map)?;
    let (w, h) = (map.width() as usize, map.height() as usize);
    let labels = map.labels();
    let mut out = BTreeSet::new();
    for (i, &l) in labels.iter().enumerate() {
        if !sets.is_foreground(l) || out.contains(&l) {
            continue;
        }
        if neighbors4(i, w, h).any(|j| sets.background.contains(&labels[j])) {
            out.insert(l);
        }
    }
    Ok(out)
}
