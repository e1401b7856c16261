//! Dense pixel grids: color images and binary masks.

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    /// Wraps interleaved RGB samples. Fails if either side is zero or the
    /// buffer length is not `width * height * 3`.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_nonzero(width, height)?;
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::InvalidData(format!(
                "rgb buffer has {} samples, expected {expected}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    ///
    /// Panics if `width` or `height` is zero.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| color)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Pixel by linear (row-major) index.
    pub fn pixel_at(&self, index: usize) -> [u8; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Row-major foreground/background labels, 1 = foreground.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl BinaryMask {
    /// Wraps a label buffer. Every element must be 0 or 1.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_nonzero(width, height)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::InvalidData(format!(
                "mask buffer has {} labels, expected {expected}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidData(format!("mask label {bad} is not 0 or 1")));
        }
        Ok(Self { width, height, data })
    }

    /// Panics if `width` or `height` is zero.
    pub fn zeros(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be nonzero");
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Panics if `width` or `height` is zero.
    pub fn ones(width: u32, height: u32) -> Self {
        let mut m = Self::zeros(width, height);
        m.data.fill(1);
        m
    }

    /// Panics if `width` or `height` is zero.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y as usize * width as usize + x as usize] = f(x, y) as u8;
            }
        }
        m
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] == 1
    }

    pub fn get_at(&self, index: usize) -> bool {
        self.data[index] == 1
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value as u8;
    }

    pub fn set_at(&mut self, index: usize, value: bool) {
        self.data[index] = value as u8;
    }

    /// Number of foreground pixels.
    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn has_foreground(&self) -> bool {
        self.data.contains(&1)
    }

    /// Labels scaled to 0/255 for image export.
    pub fn to_luma8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }
}

fn check_nonzero(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidData(format!(
            "image dimensions must be nonzero, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Fails with [`Error::DimensionMismatch`] unless the two sizes agree.
pub(crate) fn ensure_same_dims(expected: (u32, u32), found: (u32, u32)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            found_width: found.0,
            found_height: found.1,
        });
    }
    Ok(())
}
