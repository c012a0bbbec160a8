//! Stage one: latent vector → single-channel edge-map sketch.
//!
//! A DCGAN-style generator is trained against a packed discriminator with
//! the relativistic average least-squares objective:
//!
//! ```text
//! L_D = mean((D_r - mean(D_f) - 1)²) + mean((D_f - mean(D_r) + 1)²)
//! L_G = mean((D_r - mean(D_f) + 1)²) + mean((D_f - mean(D_r) - 1)²)
//! ```

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{qualified, BatchNorm, Bound, Conv, ConvKind, ConvSpec, Forward, Linear, ParamSet, LEAKY_SLOPE};
use crate::rng::Stream;
use crate::tensor::{AdamConfig, AdamState, Graph, Scalar, Tensor, Var};

/// The latent distribution: `dim` independent standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentSpec {
    pub dim: usize,
}

impl Default for LatentSpec {
    fn default() -> Self {
        LatentSpec { dim: 128 }
    }
}

impl LatentSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!("latent dimension {dim} < 2")));
        }
        Ok(LatentSpec { dim })
    }

    /// `n × dim` batch of draws.
    pub fn sample(&self, n: usize, stream: &mut Stream) -> Tensor<f32> {
        Tensor::randn(&[n, self.dim], 1.0, stream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SketchConfig {
    pub latent_dim: usize,
    /// Side of the square sketch; a power of two ≥ 8.
    pub size: usize,
    /// Channels of the last generator block and first discriminator block.
    pub width: usize,
    /// Samples per packed discriminator input.
    pub pack: usize,
    pub adam: AdamConfig,
}

impl Default for SketchConfig {
    fn default() -> Self {
        SketchConfig { latent_dim: 128, size: 32, width: 16, pack: 2, adam: AdamConfig::default() }
    }
}

impl SketchConfig {
    pub fn validate(&self) -> Result<()> {
        LatentSpec::new(self.latent_dim)?;
        if self.size < 8 || !self.size.is_power_of_two() {
            return Err(Error::invalid(format!("sketch size {} is not a power of two >= 8", self.size)));
        }
        if self.width == 0 || self.pack == 0 {
            return Err(Error::invalid("width and pack must be positive"));
        }
        Ok(())
    }

    /// Number of ×2 upsamplings between the 4×4 seed and the output.
    fn levels(&self) -> usize {
        (self.size / 4).trailing_zeros() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchGenerator {
    config: SketchConfig,
    params: ParamSet,
    seed_channels: usize,
    project: Linear,
    project_bn: BatchNorm,
    blocks: Vec<(Conv, BatchNorm)>,
    out: Conv,
}

impl SketchGenerator {
    pub fn new(config: SketchConfig, prefix: &str, rng: &mut Stream) -> Result<Self> {
        config.validate()?;
        let levels = config.levels();
        let mut params = ParamSet::new();
        let seed_channels = config.width << (levels - 1);
        let n = |s: &str| qualified(prefix, s);
        let project = Linear::new(&mut params, &n("project"), config.latent_dim, seed_channels * 16, false, rng);
        let project_bn = BatchNorm::new(&mut params, &n("project_bn"), seed_channels);
        let mut blocks = Vec::new();
        let mut c = seed_channels;
        for i in 0..levels - 1 {
            let spec = ConvSpec {
                in_channels: c,
                out_channels: c / 2,
                kernel: 4,
                stride: 2,
                padding: 1,
                bias: false,
                kind: ConvKind::Transposed,
            };
            let conv = Conv::new(&mut params, &n(&format!("up{i}")), spec, rng);
            let bn = BatchNorm::new(&mut params, &n(&format!("up{i}_bn")), c / 2);
            blocks.push((conv, bn));
            c /= 2;
        }
        let spec = ConvSpec {
            in_channels: c,
            out_channels: 1,
            kernel: 4,
            stride: 2,
            padding: 1,
            bias: true,
            kind: ConvKind::Transposed,
        };
        let out = Conv::new(&mut params, &n("out"), spec, rng);
        Ok(SketchGenerator { config, params, seed_channels, project, project_bn, blocks, out })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, z: Var, fwd: &mut Forward<'_>) -> Result<Var> {
        let zs = g.shape(z);
        if zs.len() != 2 || zs[1] != self.config.latent_dim {
            return Err(Error::shape(
                "sketch_generate",
                format!("latent batch {zs:?}, expected N×{}", self.config.latent_dim),
            ));
        }
        let n = zs[0];
        let h = self.project.forward(g, p, z)?;
        let h = g.reshape(h, &[n, self.seed_channels, 4, 4])?;
        let h = self.project_bn.forward(g, p, &self.params, h, fwd)?;
        let mut h = g.relu(h)?;
        for (conv, bn) in &self.blocks {
            h = conv.forward(g, p, h)?;
            h = bn.forward(g, p, &self.params, h, fwd)?;
            h = g.relu(h)?;
        }
        let h = self.out.forward(g, p, h)?;
        g.tanh(h)
    }

    /// Eval-mode sketches `N×1×S×S` in `(-1, 1)` for a latent batch `N×dim`.
    pub fn generate(&self, z: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::<f32>::new();
        let p = self.params.bind(&mut g, false);
        let zv = g.constant(z.clone());
        let out = self.forward(&mut g, &p, zv, &mut Forward::eval())?;
        Ok(g.value(out).clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchDiscriminator {
    config: SketchConfig,
    params: ParamSet,
    input: Conv,
    blocks: Vec<(Conv, BatchNorm)>,
    out: Conv,
}

impl SketchDiscriminator {
    pub fn new(config: SketchConfig, prefix: &str, rng: &mut Stream) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let n = |s: &str| qualified(prefix, s);
        let down = |i: usize, o: usize, bias: bool| ConvSpec {
            in_channels: i,
            out_channels: o,
            kernel: 4,
            stride: 2,
            padding: 1,
            bias,
            kind: ConvKind::Forward,
        };
        let input = Conv::new(&mut params, &n("in"), down(config.pack, config.width, true), rng);
        let mut blocks = Vec::new();
        let (mut c, mut side) = (config.width, config.size / 2);
        let mut i = 0;
        while side > 4 {
            let conv = Conv::new(&mut params, &n(&format!("down{i}")), down(c, c * 2, false), rng);
            let bn = BatchNorm::new(&mut params, &n(&format!("down{i}_bn")), c * 2);
            blocks.push((conv, bn));
            c *= 2;
            side /= 2;
            i += 1;
        }
        let spec = ConvSpec {
            in_channels: c,
            out_channels: 1,
            kernel: 4,
            stride: 1,
            padding: 0,
            bias: true,
            kind: ConvKind::Forward,
        };
        let out = Conv::new(&mut params, &n("out"), spec, rng);
        Ok(SketchDiscriminator { config, params, input, blocks, out })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn input_channels(&self) -> usize {
        self.input.in_channels
    }

    /// Scores for a packed batch `(N/k)×k×S×S`; returns a vector of `N/k` raw scores.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, fwd: &mut Forward<'_>) -> Result<Var> {
        let s = g.shape(x);
        let (k, side) = (self.config.pack, self.config.size);
        if s.len() != 4 || s[1] != k || s[2] != side || s[3] != side {
            return Err(Error::shape("sketch_discriminator", format!("input {s:?}, expected M×{k}×{side}×{side}")));
        }
        let m = s[0];
        let h = self.input.forward(g, p, x)?;
        let mut h = g.leaky_relu(h, T::from_f64(LEAKY_SLOPE))?;
        for (conv, bn) in &self.blocks {
            h = conv.forward(g, p, h)?;
            h = bn.forward(g, p, &self.params, h, fwd)?;
            h = g.leaky_relu(h, T::from_f64(LEAKY_SLOPE))?;
        }
        let h = self.out.forward(g, p, h)?;
        g.reshape(h, &[m])
    }
}

fn pack_shape(shape: &[usize], k: usize) -> Result<[usize; 4]> {
    if shape.len() != 4 {
        return Err(Error::shape("pac_pack", format!("expected N×C×H×W, got {shape:?}")));
    }
    if k == 0 || !shape[0].is_multiple_of(k) {
        return Err(Error::shape("pac_pack", format!("batch of {} is not divisible by pack size {k}", shape[0])));
    }
    Ok([shape[0] / k, shape[1] * k, shape[2], shape[3]])
}

/// Concatenates consecutive groups of `k` samples along channels:
/// `N×C×H×W → (N/k)×(k·C)×H×W`. In row-major layout this is a pure reshape.
pub fn pac_pack<T: Scalar>(batch: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let shape = pack_shape(batch.shape(), k)?;
    batch.clone().reshape(&shape)
}

/// Inverse of [`pac_pack`].
pub fn pac_unpack<T: Scalar>(packed: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let s = packed.shape();
    if s.len() != 4 || k == 0 || !s[1].is_multiple_of(k) {
        return Err(Error::shape("pac_unpack", format!("{s:?} cannot be split into {k} samples")));
    }
    packed.clone().reshape(&[s[0] * k, s[1] / k, s[2], s[3]])
}

/// Graph form of [`pac_pack`].
pub fn pac_pack_var<T: Scalar>(g: &mut Graph<T>, x: Var, k: usize) -> Result<Var> {
    let shape = pack_shape(g.shape(x), k)?;
    g.reshape(x, &shape)
}

fn rals<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var, real_target: f64) -> Result<Var> {
    let (rs, fs) = (g.shape(real), g.shape(fake));
    if g.value(real).numel() == 0 || g.value(fake).numel() == 0 {
        return Err(Error::Empty("discriminator scores"));
    }
    if rs != fs {
        return Err(Error::shape("rals_loss", format!("real scores {rs:?} vs fake scores {fs:?}")));
    }
    let mean_real = g.mean(real)?;
    let mean_fake = g.mean(fake)?;
    let a = g.sub_broadcast(real, mean_fake)?;
    let a = g.add_scalar(a, T::from_f64(-real_target))?;
    let a = g.square(a)?;
    let a = g.mean(a)?;
    let b = g.sub_broadcast(fake, mean_real)?;
    let b = g.add_scalar(b, T::from_f64(real_target))?;
    let b = g.square(b)?;
    let b = g.mean(b)?;
    g.add(a, b)
}

/// Discriminator loss: real scores pushed one above the mean fake score and
/// fake scores one below the mean real score.
pub fn rals_d_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    rals(g, d_real, d_fake, 1.0)
}

/// Generator loss: the discriminator targets with signs swapped.
pub fn rals_g_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    rals(g, d_real, d_fake, -1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchStepStats {
    pub loss_d: f32,
    pub loss_g: f32,
    pub mean_real_score: f32,
    pub mean_fake_score: f32,
    pub disc_update_norm: f64,
    pub gen_update_norm: f64,
}

/// Generator, discriminator and their optimizers.
#[derive(Debug, Clone)]
pub struct SketchGan {
    pub gen: SketchGenerator,
    pub disc: SketchDiscriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
}

impl SketchGan {
    pub const GEN_PREFIX: &'static str = "sketch.gen";
    pub const DISC_PREFIX: &'static str = "sketch.disc";

    pub fn new(config: SketchConfig, rng: &mut Stream) -> Result<Self> {
        let gen = SketchGenerator::new(config, Self::GEN_PREFIX, &mut rng.derive("sketch.gen.init"))?;
        let disc = SketchDiscriminator::new(config, Self::DISC_PREFIX, &mut rng.derive("sketch.disc.init"))?;
        let gen_opt = gen.params().adam(config.adam);
        let disc_opt = disc.params().adam(config.adam);
        Ok(SketchGan { gen, disc, gen_opt, disc_opt })
    }

    pub fn config(&self) -> &SketchConfig {
        self.gen.config()
    }

    /// One discriminator update followed by one generator update on the same
    /// latent batch. `real` is `N×1×S×S` in `[-1, 1]`, `z` is `N×dim`.
    pub fn train_step(&mut self, real: &Tensor<f32>, z: &Tensor<f32>) -> Result<SketchStepStats> {
        let cfg = *self.config();
        let n = z.shape().first().copied().unwrap_or(0);
        if real.shape() != [n, 1, cfg.size, cfg.size] {
            return Err(Error::shape(
                "train_sketch_step",
                format!("real batch {:?}, expected [{n}, 1, {s}, {s}]", real.shape(), s = cfg.size),
            ));
        }
        if n == 0 || n % cfg.pack != 0 {
            return Err(Error::invalid(format!("batch {n} not divisible by pack size {}", cfg.pack)));
        }

        // Discriminator pass on a detached fake batch.
        let mut g = Graph::<f32>::new();
        let gp = self.gen.params().bind(&mut g, false);
        let dp = self.disc.params().bind(&mut g, true);
        let zv = g.constant(z.clone());
        let mut gen_fwd = Forward::train(None);
        let fake = self.gen.forward(&mut g, &gp, zv, &mut gen_fwd)?;
        let fake = g.detach(fake);
        let real_v = g.constant(real.clone());
        let real_p = pac_pack_var(&mut g, real_v, cfg.pack)?;
        let fake_p = pac_pack_var(&mut g, fake, cfg.pack)?;
        let mut disc_fwd = Forward::train(None);
        let d_real = self.disc.forward(&mut g, &dp, real_p, &mut disc_fwd)?;
        let d_fake = self.disc.forward(&mut g, &dp, fake_p, &mut disc_fwd)?;
        let loss_d = rals_d_loss(&mut g, d_real, d_fake)?;
        g.backward(loss_d)?;
        let mean_real_score = mean(g.value(d_real).data());
        let mean_fake_score = mean(g.value(d_fake).data());
        let loss_d = g.value(loss_d).data()[0];
        let disc_update_norm = self.disc.params_mut().step(&g, &dp, &mut self.disc_opt)?;
        self.disc.params_mut().apply_bn_updates(disc_fwd.into_updates());

        // Generator pass with fresh scores from the updated discriminator.
        let mut g = Graph::<f32>::new();
        let gp = self.gen.params().bind(&mut g, true);
        let dp = self.disc.params().bind(&mut g, false);
        let zv = g.constant(z.clone());
        let mut gen_fwd = Forward::train(None);
        let fake = self.gen.forward(&mut g, &gp, zv, &mut gen_fwd)?;
        let real_v = g.constant(real.clone());
        let real_p = pac_pack_var(&mut g, real_v, cfg.pack)?;
        let fake_p = pac_pack_var(&mut g, fake, cfg.pack)?;
        let mut scratch = Forward::train(None);
        let d_real = self.disc.forward(&mut g, &dp, real_p, &mut scratch)?;
        let d_fake = self.disc.forward(&mut g, &dp, fake_p, &mut scratch)?;
        let loss_g = rals_g_loss(&mut g, d_real, d_fake)?;
        g.backward(loss_g)?;
        let loss_g = g.value(loss_g).data()[0];
        let gen_update_norm = self.gen.params_mut().step(&g, &gp, &mut self.gen_opt)?;
        self.gen.params_mut().apply_bn_updates(gen_fwd.into_updates());

        if !self.gen.params().all_finite() || !self.disc.params().all_finite() {
            return Err(Error::NonFinite { what: "sketch parameters after update".into() });
        }
        Ok(SketchStepStats { loss_d, loss_g, mean_real_score, mean_fake_score, disc_update_norm, gen_update_norm })
    }
}

fn mean(v: &[f32]) -> f32 {
    v.iter().sum::<f32>() / v.len() as f32
}
