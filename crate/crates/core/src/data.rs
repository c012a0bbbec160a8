//! Painting preparation: orientation, resize, ratio-gated tiling, the
//! `[-1, 1]` tensor mapping, and a procedural landscape generator for
//! desk-scale corpora.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::RawImage;
use crate::rng::Stream;
use crate::tensor::Tensor;

pub const DEFAULT_TILE: usize = 64;
pub const DEFAULT_RATIO_THRESHOLD: f64 = 1.5;

/// Cuts a painting into `tile×tile` squares.
///
/// Landscape-format inputs are turned upright, the image is resized to
/// `tile` pixels wide, near-square images (height/width ≤ `ratio_threshold`)
/// yield one center crop and taller ones yield `floor(height / tile)`
/// non-overlapping tiles from the top. Tiles of a turned input are turned
/// back to the original orientation.
pub fn preprocess_painting(img: &RawImage, tile: usize, ratio_threshold: f64) -> Result<Vec<RawImage>> {
    if tile < 8 {
        return Err(Error::invalid(format!("tile size {tile} < 8")));
    }
    // Images narrower than a tile would need upscaling; those are rejected.
    if img.width().min(img.height()) < tile {
        return Err(Error::invalid(format!(
            "{}x{} image is smaller than one {tile}x{tile} tile",
            img.width(),
            img.height()
        )));
    }
    let rotated = img.width() > img.height();
    let upright = if rotated { img.rotate_cw() } else { img.clone() };
    let (w, h) = (upright.width(), upright.height());
    let new_h = libm::round(h as f64 * tile as f64 / w as f64) as usize;
    let resized = upright.resize_bilinear(tile, new_h)?;
    let ratio = h as f64 / w as f64;
    let tiles = if ratio <= ratio_threshold {
        alloc::vec![resized.crop(0, (new_h - tile) / 2, tile, tile)?]
    } else {
        (0..new_h / tile).map(|i| resized.crop(0, i * tile, tile, tile)).collect::<Result<Vec<_>>>()?
    };
    Ok(if rotated { tiles.iter().map(RawImage::rotate_ccw).collect() } else { tiles })
}

/// `1×C×H×W` tensor with `0 → -1` and `255 → 1`.
pub fn normalize(img: &RawImage) -> Tensor<f32> {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut data = alloc::vec![0.0f32; w * h * c];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                data[(ch * h + y) * w + x] = f32::from(img.get(x, y, ch)) / 127.5 - 1.0;
            }
        }
    }
    Tensor::new(&[1, c, h, w], data).expect("image dims are positive")
}

/// Stacks images of identical geometry into an `N×C×H×W` batch.
pub fn normalize_batch(images: &[RawImage]) -> Result<Tensor<f32>> {
    let parts: Vec<Tensor<f32>> = images.iter().map(normalize).collect();
    Tensor::stack(&parts)
}

/// Sample `index` of an `N×C×H×W` tensor as an image, clamping to `[-1, 1]`.
pub fn denormalize(t: &Tensor<f32>, index: usize) -> Result<RawImage> {
    let s = t.shape();
    if s.len() != 4 || index >= s[0] || (s[1] != 1 && s[1] != 3) {
        return Err(Error::shape("denormalize", format!("sample {index} of {s:?}")));
    }
    let (c, h, w) = (s[1], s[2], s[3]);
    let sample = &t.data()[index * c * h * w..][..c * h * w];
    RawImage::from_fn(w, h, c, |x, y, ch| {
        let v = sample[(ch * h + y) * w + x].clamp(-1.0, 1.0);
        libm::roundf((v + 1.0) * 127.5) as u8
    })
}

/// Hands out batches of corpus indices: each epoch is a fresh shuffle cut
/// into consecutive, disjoint batches. A short tail is dropped so every
/// batch has the requested size.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    len: usize,
    batch: usize,
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    stream: Stream,
}

impl EpochSampler {
    pub fn new(len: usize, batch: usize, stream: Stream) -> Result<Self> {
        if batch == 0 || len < batch {
            return Err(Error::invalid(format!("cannot draw batches of {batch} from {len} samples")));
        }
        Ok(EpochSampler { len, batch, order: Vec::new(), pos: len, epoch: 0, stream })
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order = (0..self.len).collect();
            self.stream.derive_index(self.epoch).shuffle(&mut self.order);
            self.epoch += 1;
            self.pos = 0;
        }
        self.pos += self.batch;
        &self.order[self.pos - self.batch..self.pos]
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Procedural ink-wash landscape: 2–4 ridgelines over a paper-toned
/// background, farther ridges lighter, each fading downward like mist.
pub fn synth_landscape(stream: &mut Stream, size: usize) -> Result<RawImage> {
    if size < 16 {
        return Err(Error::invalid(format!("synthetic landscape size {size} < 16")));
    }
    let s = size as f64;
    let paper =
        [stream.uniform_range(225.0, 240.0), stream.uniform_range(212.0, 228.0), stream.uniform_range(180.0, 205.0)];
    let ink = [stream.uniform_range(20.0, 45.0), stream.uniform_range(30.0, 55.0), stream.uniform_range(30.0, 50.0)];
    let count = 2 + stream.below(3);
    struct Ridge {
        base: f64,
        waves: [(f64, f64, f64); 3],
        darkness: f64,
        fade: f64,
    }
    let ridges: Vec<Ridge> = (0..count)
        .map(|r| {
            let depth = (r + 1) as f64 / count as f64;
            let base = s * lerp(0.25, 0.75, r as f64 / count as f64) + stream.uniform_range(-0.05, 0.05) * s;
            let mut waves = [(0.0, 0.0, 0.0); 3];
            for (k, wv) in waves.iter_mut().enumerate() {
                let amp = s * stream.uniform_range(0.04, 0.14) / (k + 1) as f64;
                let freq = stream.uniform_range(0.5, 2.5) * (k + 1) as f64 * core::f64::consts::TAU / s;
                let phase = stream.uniform_range(0.0, core::f64::consts::TAU);
                *wv = (amp, freq, phase);
            }
            Ridge { base, waves, darkness: lerp(0.25, 0.85, depth), fade: s * stream.uniform_range(0.15, 0.4) }
        })
        .collect();
    let grain: Vec<f64> = (0..size * size).map(|_| stream.uniform_range(-3.0, 3.0)).collect();

    RawImage::from_fn(size, size, 3, |x, y, c| {
        let (xf, yf) = (x as f64, y as f64);
        let mut tone = paper[c];
        for ridge in &ridges {
            let crest = ridge.base + ridge.waves.iter().map(|&(a, f, p)| a * libm::sin(f * xf + p)).sum::<f64>();
            if yf >= crest {
                let mist = libm::exp(-(yf - crest) / ridge.fade);
                let k = ridge.darkness * lerp(0.35, 1.0, mist);
                tone = lerp(tone, ink[c], k);
            }
        }
        libm::round(tone + grain[y * size + x]).clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tall_image_is_tiled_from_the_top() {
        let img = RawImage::from_fn(512, 1600, 1, |_, y, _| (y / 512) as u8 * 40).unwrap();
        let tiles = preprocess_painting(&img, 512, 1.5).unwrap();
        assert_eq!(tiles.len(), 3);
        for (i, t) in tiles.iter().enumerate() {
            assert_eq!((t.width(), t.height()), (512, 512));
            assert!(t.pixels().iter().all(|&v| v == i as u8 * 40));
        }
    }

    #[test]
    fn near_square_is_center_cropped() {
        let img = RawImage::from_fn(512, 600, 1, |_, y, _| (y % 251) as u8).unwrap();
        let tiles = preprocess_painting(&img, 512, 1.5).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0], img.crop(0, 44, 512, 512).unwrap());
    }

    #[test]
    fn landscape_format_round_trips_orientation() {
        let img = RawImage::from_fn(600, 512, 3, |x, y, c| ((x * 3 + y + c) % 256) as u8).unwrap();
        let tiles = preprocess_painting(&img, 512, 1.5).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!((tiles[0].width(), tiles[0].height()), (512, 512));
        assert_eq!(tiles[0], img.crop(44, 0, 512, 512).unwrap());
    }

    #[test]
    fn undersized_input_is_rejected() {
        let err = preprocess_painting(&RawImage::filled(64, 40, 1, 0).unwrap(), 48, 1.5).unwrap_err();
        assert!(format!("{err}").contains("64x40"), "{err}");
        assert_eq!(preprocess_painting(&RawImage::filled(64, 40, 1, 0).unwrap(), 32, 1.5).unwrap().len(), 1);
        let err = preprocess_painting(&RawImage::filled(10, 10, 1, 0).unwrap(), 4, 1.5).unwrap_err();
        assert!(format!("{err}").contains("tile size"));
    }

    #[test]
    fn normalize_endpoints_and_clamp() {
        let img = RawImage::new(2, 1, 1, alloc::vec![0, 255]).unwrap();
        let t = normalize(&img);
        assert_eq!(t.data(), &[-1.0, 1.0]);
        let over = Tensor::new(&[1, 1, 1, 2], alloc::vec![1.5f32, -3.0]).unwrap();
        assert_eq!(denormalize(&over, 0).unwrap().pixels(), &[255, 0]);
    }

    #[test]
    fn normalize_round_trip() {
        let img = RawImage::from_fn(5, 4, 3, |x, y, c| (x * 50 + y * 9 + c * 77) as u8).unwrap();
        assert_eq!(denormalize(&normalize(&img), 0).unwrap(), img);
    }

    #[test]
    fn epochs_cover_every_sample_once() {
        let mut s = EpochSampler::new(10, 3, Stream::new(1)).unwrap();
        let mut seen: Vec<usize> = (0..3).flat_map(|_| s.next_batch().to_vec()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        assert_eq!(s.epoch(), 1);
        s.next_batch();
        assert_eq!(s.epoch(), 2);
        assert!(EpochSampler::new(2, 3, Stream::new(1)).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_landscape(&mut Stream::new(9), 32).unwrap();
        let b = synth_landscape(&mut Stream::new(9), 32).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_landscape(&mut Stream::new(10), 32).unwrap());
        assert!(synth_landscape(&mut Stream::new(9), 8).is_err());
    }
}
