//! Training drivers over a preprocessed manifest.

use std::path::Path;

use sapgan_core::data::{normalize, EpochSampler};
use sapgan_core::image::RawImage;
use sapgan_core::paint::{PaintConfig, PaintGan, PaintLosses};
use sapgan_core::sketch::{LatentSpec, SketchConfig, SketchGan, SketchStepStats};
use sapgan_core::{Stream, Tensor};

use crate::checkpoint::{paint_checkpoint, sketch_checkpoint};
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOptions {
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    /// Log a progress line every this many steps; 0 disables progress lines.
    pub log_every: usize,
}

fn fit(img: &RawImage, size: usize, channels: usize) -> Result<Tensor<f32>> {
    let img = if (img.width(), img.height()) == (size, size) { img.clone() } else { img.resize_bilinear(size, size)? };
    let img = match (img.channels(), channels) {
        (c, want) if c == want => img,
        (1, 3) => img.to_rgb(),
        (3, 1) => {
            let luma = img.luma();
            RawImage::from_fn(size, size, 1, |x, y, _| luma[y * size + x].round().clamp(0.0, 255.0) as u8)?
        }
        (c, want) => return Err(Error::Config(format!("cannot convert {c}-channel image to {want} channels"))),
    };
    Ok(normalize(&img))
}

/// Index-aligned `1×1×S×S` edge maps and `1×3×S×S` paintings.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub edges: Vec<Tensor<f32>>,
    pub paintings: Vec<Tensor<f32>>,
}

/// Loads every pair a manifest lists, resized to `size`.
pub fn load_corpus(manifest_path: &Path, size: usize) -> Result<Corpus> {
    let manifest = DatasetManifest::load(manifest_path)?;
    if manifest.tile_size != size {
        log::info!("resizing {0}x{0} tiles to {1}x{1}", manifest.tile_size, size);
    }
    let pairs = manifest.load_pairs(manifest_path)?;
    let mut edges = Vec::with_capacity(pairs.len());
    let mut paintings = Vec::with_capacity(pairs.len());
    for (p, e) in &pairs {
        edges.push(fit(e, size, 1)?);
        paintings.push(fit(p, size, 3)?);
    }
    Ok(Corpus { edges, paintings })
}

fn gather(items: &[Tensor<f32>], idx: &[usize]) -> Result<Tensor<f32>> {
    let parts: Vec<Tensor<f32>> = idx.iter().map(|&i| items[i].clone()).collect();
    Ok(Tensor::stack(&parts)?)
}

/// Trains the sketch GAN on the given edge maps and returns it with per-step statistics.
pub fn train_sketch(
    cfg: SketchConfig,
    sketches: &[Tensor<f32>],
    opts: LoopOptions,
) -> Result<(SketchGan, Vec<SketchStepStats>)> {
    let root = Stream::new(opts.seed);
    let mut gan = SketchGan::new(cfg, &mut root.derive("sketch.model"))?;
    let latent = LatentSpec::new(cfg.latent_dim)?;
    let mut sampler = EpochSampler::new(sketches.len(), opts.batch, root.derive("sketch.batches"))?;
    let mut noise = root.derive("sketch.latent");
    let mut history = Vec::with_capacity(opts.steps);
    for step in 1..=opts.steps {
        let real = gather(sketches, sampler.next_batch())?;
        let z = latent.sample(opts.batch, &mut noise);
        let s = gan.train_step(&real, &z)?;
        if opts.log_every > 0 && (step % opts.log_every == 0 || step == opts.steps) {
            log::info!(
                "sketch step {step}/{} epoch {}: loss_d {:.4} loss_g {:.4} D(real) {:.3} D(fake) {:.3}",
                opts.steps,
                sampler.epoch(),
                s.loss_d,
                s.loss_g,
                s.mean_real_score,
                s.mean_fake_score
            );
        }
        history.push(s);
    }
    Ok((gan, history))
}

pub fn train_paint(
    cfg: PaintConfig,
    edges: &[Tensor<f32>],
    paintings: &[Tensor<f32>],
    opts: LoopOptions,
) -> Result<(PaintGan, Vec<PaintLosses>)> {
    if edges.len() != paintings.len() {
        return Err(Error::Config(format!("{} edge maps for {} paintings", edges.len(), paintings.len())));
    }
    let root = Stream::new(opts.seed);
    let mut gan = PaintGan::new(cfg, &mut root.derive("paint.model"))?;
    let mut sampler = EpochSampler::new(edges.len(), opts.batch, root.derive("paint.batches"))?;
    let mut history = Vec::with_capacity(opts.steps);
    for step in 1..=opts.steps {
        let idx = sampler.next_batch().to_vec();
        let l = gan.train_step(&gather(edges, &idx)?, &gather(paintings, &idx)?)?;
        if opts.log_every > 0 && (step % opts.log_every == 0 || step == opts.steps) {
            log::info!(
                "paint step {step}/{} epoch {}: loss_d {:.4} loss_g {:.4} l1 {:.4}",
                opts.steps,
                sampler.epoch(),
                l.loss_d,
                l.loss_g,
                l.l1
            );
        }
        history.push(l);
    }
    Ok((gan, history))
}

pub fn run_train_sketch(manifest: &Path, cfg: SketchConfig, opts: LoopOptions, out: &Path) -> Result<()> {
    let edges = load_corpus(manifest, cfg.size)?.edges;
    log::info!("training sketch GAN on {} edge maps for {} steps", edges.len(), opts.steps);
    let (gan, _) = train_sketch(cfg, &edges, opts)?;
    sketch_checkpoint(&gan)?.save(out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

pub fn run_train_paint(manifest: &Path, cfg: PaintConfig, opts: LoopOptions, out: &Path) -> Result<()> {
    let Corpus { edges, paintings } = load_corpus(manifest, cfg.size)?;
    log::info!("training paint GAN on {} pairs for {} steps", edges.len(), opts.steps);
    let (gan, _) = train_paint(cfg, &edges, &paintings, opts)?;
    paint_checkpoint(&gan)?.save(out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}
