//! Two-stage generation: latent → sketch → painting, and latent walks.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::paint::UNetGenerator;
use crate::sketch::SketchGenerator;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// `N×1×S×S`
    pub sketches: Tensor<f32>,
    /// `N×3×S×S`
    pub paintings: Tensor<f32>,
}

fn check_compatible(sketch: &SketchGenerator, paint: &UNetGenerator) -> Result<()> {
    let (s, p) = (sketch.config().size, paint.config().size);
    if s != p {
        return Err(Error::Incompatible(format!("sketch stage emits {s}×{s} but paint stage expects {p}×{p}")));
    }
    Ok(())
}

/// Runs both stages in eval mode, keeping the intermediate sketches.
pub fn generate(sketch: &SketchGenerator, paint: &UNetGenerator, z: &Tensor<f32>) -> Result<Generated> {
    check_compatible(sketch, paint)?;
    let sketches = sketch.generate(z)?;
    let paintings = paint.translate(&sketches)?;
    Ok(Generated { sketches, paintings })
}

/// `translate(paint, sketch_generate(sketch, z))`.
pub fn end_to_end(sketch: &SketchGenerator, paint: &UNetGenerator, z: &Tensor<f32>) -> Result<Tensor<f32>> {
    Ok(generate(sketch, paint, z)?.paintings)
}

/// `n` evenly spaced points `(1 − t)·z0 + t·z1`, `t = i/(n − 1)`, as a `n×dim` batch.
pub fn interpolate(z0: &[f32], z1: &[f32], n: usize) -> Result<(Vec<f64>, Tensor<f32>)> {
    if n < 2 {
        return Err(Error::invalid(format!("interpolation needs at least 2 frames, got {n}")));
    }
    if z0.len() != z1.len() || z0.is_empty() {
        return Err(Error::shape("interpolate", format!("endpoints of dimension {} and {}", z0.len(), z1.len())));
    }
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut data = Vec::with_capacity(n * z0.len());
    for &t in &ts {
        let (a, b) = ((1.0 - t) as f32, t as f32);
        data.extend(z0.iter().zip(z1).map(|(&p, &q)| a * p + b * q));
    }
    Ok((ts, Tensor::new(&[n, z0.len()], data)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentWalk {
    pub ts: Vec<f64>,
    pub latents: Tensor<f32>,
    pub frames: Generated,
}

pub fn latent_walk(
    sketch: &SketchGenerator,
    paint: &UNetGenerator,
    z0: &[f32],
    z1: &[f32],
    n: usize,
) -> Result<LatentWalk> {
    if z0.len() != sketch.config().latent_dim {
        return Err(Error::shape(
            "interpolate",
            format!("latent of dimension {}, generator expects {}", z0.len(), sketch.config().latent_dim),
        ));
    }
    let (ts, latents) = interpolate(z0, z1, n)?;
    let frames = generate(sketch, paint, &latents)?;
    Ok(LatentWalk { ts, latents, frames })
}

/// Mean over pixels of the per-pixel Euclidean distance across channels
/// between samples `i` and `j` of a batch.
pub fn mean_pixel_l2(batch: &Tensor<f32>, i: usize, j: usize) -> f64 {
    let s = batch.shape();
    let (c, plane) = (s[1], s[2] * s[3]);
    let a = &batch.data()[i * c * plane..][..c * plane];
    let b = &batch.data()[j * c * plane..][..c * plane];
    let total: f64 = (0..plane)
        .map(|p| {
            let sq: f64 = (0..c)
                .map(|ch| {
                    let d = f64::from(a[ch * plane + p] - b[ch * plane + p]);
                    d * d
                })
                .sum();
            libm::sqrt(sq)
        })
        .sum();
    total / plane as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_frame_schedule() {
        let (ts, z) = interpolate(&[0.0, 1.0], &[1.0, 0.0], 6).unwrap();
        assert_eq!(ts, alloc::vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(&z.data()[0..2], &[0.0, 1.0]);
        assert_eq!(&z.data()[10..12], &[1.0, 0.0]);
        assert!(interpolate(&[0.0], &[1.0], 1).is_err());
        assert!(interpolate(&[0.0], &[1.0, 2.0], 3).is_err());
    }

    #[test]
    fn endpoints_are_exact_copies() {
        let z0 = [0.123f32, -4.5, 7.25e-3];
        let z1 = [1e6f32, -0.0, 3.3];
        let (_, z) = interpolate(&z0, &z1, 6).unwrap();
        assert_eq!(&z.data()[0..3], &z0);
        assert_eq!(&z.data()[15..18], &z1);
    }
}
