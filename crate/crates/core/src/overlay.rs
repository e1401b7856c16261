//! Diagnostic drawing: superpixel boundaries and mask outlines over an image.

use crate::components::neighbors4;
use crate::error::Result;
use crate::image::{ensure_same_dims, BinaryMask, RgbImage};
use crate::superpixel::SuperpixelMap;

pub const BOUNDARY_COLOR: [u8; 3] = [255, 255, 0];
pub const PSEUDO_COLOR: [u8; 3] = [0, 255, 0];
pub const BOX_COLOR: [u8; 3] = [255, 0, 255];
pub const GT_COLOR: [u8; 3] = [0, 255, 255];

/// Paints every pixel whose right or lower neighbor lies in another segment.
pub fn draw_segment_boundaries(image: &mut RgbImage, map: &SuperpixelMap, color: [u8; 3]) -> Result<()> {
    ensure_same_dims(image.dims(), map.dims())?;
    let (w, h) = map.dims();
    for y in 0..h {
        for x in 0..w {
            let l = map.label(x, y);
            if (x + 1 < w && map.label(x + 1, y) != l) || (y + 1 < h && map.label(x, y + 1) != l) {
                image.put_pixel(x, y, color);
            }
        }
    }
    Ok(())
}

/// Foreground pixels on the image border or next to background.
pub fn mask_contour(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let (wu, hu) = (w as usize, h as usize);
    BinaryMask::from_fn(w, h, |x, y| {
        let i = y as usize * wu + x as usize;
        mask.get_at(i)
            && (x == 0 || y == 0 || x + 1 == w || y + 1 == h || neighbors4(i, wu, hu).any(|j| !mask.get_at(j)))
    })
}

/// Paints the outline of `mask`.
pub fn draw_mask_contour(image: &mut RgbImage, mask: &BinaryMask, color: [u8; 3]) -> Result<()> {
    ensure_same_dims(image.dims(), mask.dims())?;
    let contour = mask_contour(mask);
    let w = image.width() as usize;
    for (i, &c) in contour.as_raw().iter().enumerate() {
        if c == 1 {
            image.put_pixel((i % w) as u32, (i / w) as u32, color);
        }
    }
    Ok(())
}

/// Copy of `image` with optional superpixel boundaries, then each mask's
/// outline in order (later masks draw on top).
pub fn render_overlay(
    image: &RgbImage,
    segments: Option<&SuperpixelMap>,
    masks: &[(&BinaryMask, [u8; 3])],
) -> Result<RgbImage> {
    let mut out = image.clone();
    if let Some(map) = segments {
        draw_segment_boundaries(&mut out, map, BOUNDARY_COLOR)?;
    }
    for (mask, color) in masks {
        draw_mask_contour(&mut out, mask, *color)?;
    }
    Ok(out)
}
