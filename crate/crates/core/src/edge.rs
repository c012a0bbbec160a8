//! Classical edge extraction: blur, Sobel magnitude, non-maximum
//! suppression and hysteresis thresholding.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::RawImage;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeParams {
    pub blur_sigma: f64,
    /// Weak threshold on the max-normalized gradient magnitude.
    pub low: f64,
    /// Strong threshold; pixels above it seed the hysteresis flood.
    pub high: f64,
    /// Black edges on white instead of white on black.
    pub invert: bool,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams { blur_sigma: 1.0, low: 0.1, high: 0.2, invert: false }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(format!("blur sigma {}", self.blur_sigma)));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.low) || !unit.contains(&self.high) || self.low > self.high {
            return Err(Error::invalid(format!(
                "thresholds need 0 <= low <= high <= 1, got low {} high {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian with radius `ceil(3σ)` and replicated borders.
pub fn gaussian_blur(buf: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return buf.to_vec();
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut kernel: Vec<f32> =
        (-radius..=radius).map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)) as f32).collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut tmp = vec![0.0f32; buf.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| w * buf[y * width + clamp_index(x as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0f32; buf.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| w * tmp[clamp_index(y as isize + k as isize - radius, height) * width + x])
                .sum();
        }
    }
    out
}

/// Sobel responses `(gx, gy)` with replicated borders.
pub fn sobel(buf: &[f32], width: usize, height: usize) -> (Vec<f32>, Vec<f32>) {
    let at = |x: isize, y: isize| buf[clamp_index(y, height) * width + clamp_index(x, width)];
    let mut gx = vec![0.0f32; buf.len()];
    let mut gy = vec![0.0f32; buf.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let i = y as usize * width + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Thins ridges of `mag` to one pixel across the gradient direction. On a
/// plateau of equal maxima the pixel on the positive side survives.
fn non_max_suppress(mag: &[f32], gx: &[f32], gy: &[f32], width: usize, height: usize) -> Vec<f32> {
    let tan22 = 0.414_213_56f32;
    let mut out = vec![0.0f32; mag.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let (dx, dy): (isize, isize) = if ay <= tan22 * ax {
                (1, 0)
            } else if ax <= tan22 * ay {
                (0, 1)
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                (1, 1)
            } else {
                (1, -1)
            };
            let neighbor = |s: isize| {
                let nx = x as isize + s * dx;
                let ny = y as isize + s * dy;
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    0.0
                } else {
                    mag[ny as usize * width + nx as usize]
                }
            };
            if m >= neighbor(-1) && m > neighbor(1) {
                out[i] = m;
            }
        }
    }
    out
}

/// Single-channel edge map of `img`; edge pixels carry their normalized
/// gradient magnitude scaled to `0..=255`.
pub fn edge_map(img: &RawImage, p: &EdgeParams) -> Result<RawImage> {
    p.validate()?;
    let (w, h) = (img.width(), img.height());
    let gray = gaussian_blur(&img.luma(), w, h, p.blur_sigma);
    let (gx, gy) = sobel(&gray, w, h);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(&a, &b)| libm::hypotf(a, b)).collect();
    let peak = mag.iter().copied().fold(0.0f32, f32::max);
    let mut out = vec![0u8; w * h];
    // Blurring a constant image leaves float dust; treat it as flat.
    if peak > 1e-3 {
        let norm: Vec<f32> = mag.iter().map(|&m| m / peak).collect();
        let thin = non_max_suppress(&norm, &gx, &gy, w, h);
        let (low, high) = (p.low as f32, p.high as f32);
        let mut keep = vec![false; w * h];
        let mut queue: VecDeque<usize> = (0..w * h).filter(|&i| thin[i] >= high && thin[i] > 0.0).collect();
        for &i in &queue {
            keep[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !keep[j] && thin[j] >= low && thin[j] > 0.0 {
                        keep[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        for i in 0..w * h {
            if keep[i] {
                out[i] = libm::roundf(thin[i] * 255.0).clamp(0.0, 255.0) as u8;
            }
        }
    }
    if p.invert {
        out.iter_mut().for_each(|v| *v = 255 - *v);
    }
    RawImage::new(w, h, 1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        for sigma in [0.0, 1.0, 2.5] {
            let img = RawImage::filled(16, 12, 3, 137).unwrap();
            let e = edge_map(&img, &EdgeParams { blur_sigma: sigma, ..Default::default() }).unwrap();
            assert_eq!(e.channels(), 1);
            assert!(e.pixels().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn step_gives_single_column() {
        let img = RawImage::from_fn(8, 8, 1, |x, _, _| if x < 4 { 0 } else { 255 }).unwrap();
        let p = EdgeParams { blur_sigma: 0.0, ..Default::default() };
        let e = edge_map(&img, &p).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expected = if x == 4 { 255 } else { 0 };
                assert_eq!(e.get(x, y, 0), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn invert_flips_background() {
        let img = RawImage::filled(4, 4, 1, 9).unwrap();
        let e = edge_map(&img, &EdgeParams { invert: true, ..Default::default() }).unwrap();
        assert!(e.pixels().iter().all(|&v| v == 255));
    }

    #[test]
    fn params_validated() {
        let img = RawImage::filled(4, 4, 1, 9).unwrap();
        let bad = EdgeParams { low: 0.5, high: 0.2, ..Default::default() };
        assert!(edge_map(&img, &bad).is_err());
        assert!(EdgeParams { blur_sigma: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn blur_preserves_mass_of_constant() {
        let buf = vec![3.0f32; 30];
        let out = gaussian_blur(&buf, 6, 5, 1.3);
        assert!(out.iter().all(|&v| (v - 3.0).abs() < 1e-5));
    }
}
