//! 8-bit raster images and the geometric operations the dataset rules need.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major interleaved 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image dimensions {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("{channels} channels; expected 1 or 3")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(RawImage { width, height, channels, pixels })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from a per-pixel function returning `channels` values.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// 90° clockwise: the left column becomes the top row.
    pub fn rotate_cw(&self) -> RawImage {
        let (w, h, c) = (self.width, self.height, self.channels);
        Self::from_fn(h, w, c, |x, y, ch| self.get(y, h - 1 - x, ch)).expect("rotation preserves size")
    }

    /// 90° counter-clockwise; inverse of [`RawImage::rotate_cw`].
    pub fn rotate_ccw(&self) -> RawImage {
        let (w, h, c) = (self.width, self.height, self.channels);
        Self::from_fn(h, w, c, |x, y, ch| self.get(w - 1 - y, x, ch)).expect("rotation preserves size")
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<RawImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!("crop {w}x{h}+{x0}+{y0} exceeds {}x{} image", self.width, self.height)));
        }
        Self::from_fn(w, h, self.channels, |x, y, c| self.get(x0 + x, y0 + y, c))
    }

    /// Bilinear resampling with pixel-center alignment and clamped borders.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<RawImage> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let axis = |dst: usize, scale: f64, extent: usize| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (libm::floor(src) as usize).min(extent - 1);
            let i1 = (i0 + 1).min(extent - 1);
            (i0, i1, src - i0 as f64)
        };
        let xs: Vec<_> = (0..width).map(|x| axis(x, sx, self.width)).collect();
        let ys: Vec<_> = (0..height).map(|y| axis(y, sy, self.height)).collect();
        Self::from_fn(width, height, self.channels, |x, y, c| {
            let (x0, x1, fx) = xs[x];
            let (y0, y1, fy) = ys[y];
            let p = |xx, yy| f64::from(self.get(xx, yy, c));
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            libm::round(top * (1.0 - fy) + bot * fy).clamp(0.0, 255.0) as u8
        })
    }

    /// Luma (Rec. 601 weights) as floats in `0..=255`.
    pub fn luma(&self) -> Vec<f32> {
        match self.channels {
            1 => self.pixels.iter().map(|&v| f32::from(v)).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|p| 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]))
                .collect(),
        }
    }

    pub fn to_rgb(&self) -> RawImage {
        if self.channels == 3 {
            return self.clone();
        }
        Self::from_fn(self.width, self.height, 3, |x, y, _| self.get(x, y, 0)).expect("same size")
    }
}
