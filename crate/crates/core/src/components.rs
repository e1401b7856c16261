//! 4-connected region labeling over row-major grids.

use std::collections::VecDeque;

pub(crate) const UNLABELED: u32 = u32::MAX;

/// Labels 4-connected regions of equal value, visiting seeds in raster order.
///
/// Pixels for which `include` returns false receive [`UNLABELED`]. Returns the
/// per-pixel region ids and the number of regions.
pub(crate) fn label_regions<T: PartialEq>(
    width: usize,
    height: usize,
    values: &[T],
    include: impl Fn(&T) -> bool,
) -> (Vec<u32>, usize) {
    debug_assert_eq!(values.len(), width * height);
    let mut labels = vec![UNLABELED; values.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..values.len() {
        if labels[seed] != UNLABELED || !include(&values[seed]) {
            continue;
        }
        labels[seed] = count;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            for j in neighbors4(i, width, height) {
                if labels[j] == UNLABELED && values[j] == values[seed] {
                    labels[j] = count;
                    queue.push_back(j);
                }
            }
        }
        count += 1;
    }
    (labels, count as usize)
}

/// Linear indices of the 4-neighbors of pixel `i` that lie inside the grid.
pub(crate) fn neighbors4(i: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let x = i % width;
    let y = i / width;
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < width).then(|| i + 1);
    let up = (y > 0).then(|| i - width);
    let down = (y + 1 < height).then(|| i + width);
    [up, left, right, down].into_iter().flatten()
}
