//! Stage two: edge map → three-channel painting.
//!
//! A U-Net generator with skip connections between matching resolutions is
//! trained against a packed patch discriminator on `(edge, painting)` pairs,
//! with a binary cross-entropy adversarial term plus an L1 reconstruction
//! term.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{qualified, BatchNorm, Bound, Conv, ConvKind, ConvSpec, Forward, ParamSet, LEAKY_SLOPE};
use crate::rng::Stream;
use crate::tensor::{AdamConfig, AdamState, Graph, Scalar, Tensor, Var};

pub const EDGE_CHANNELS: usize = 1;
pub const PAINT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PaintConfig {
    /// Side of the square input and output; a power of two.
    pub size: usize,
    /// Encoder levels. `None` means `log2(size)`, which shrinks the bottleneck to 1×1.
    pub depth: Option<usize>,
    /// Channels of the first encoder level; deeper levels double up to 8×.
    pub width: usize,
    pub disc_width: usize,
    /// Stride-2 layers in the patch discriminator.
    pub disc_layers: usize,
    /// Pairs per packed discriminator input.
    pub pack: usize,
    pub batch: usize,
    pub lambda_l1: f64,
    /// Weight of the adversarial term in the generator loss; 0 trains on L1 alone.
    pub adv_weight: f64,
    pub dropout: f64,
    pub adam: AdamConfig,
}

impl Default for PaintConfig {
    fn default() -> Self {
        PaintConfig {
            size: 32,
            depth: None,
            width: 16,
            disc_width: 16,
            disc_layers: 3,
            pack: 1,
            batch: 1,
            lambda_l1: 100.0,
            adv_weight: 1.0,
            dropout: 0.5,
            adam: AdamConfig { lr: 0.0002, beta1: 0.5, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 },
        }
    }
}

impl PaintConfig {
    pub fn depth(&self) -> usize {
        self.depth.unwrap_or(self.size.trailing_zeros() as usize)
    }

    /// Checks everything, generator and discriminator.
    pub fn validate(&self) -> Result<()> {
        self.validate_generator()?;
        self.validate_discriminator()
    }

    pub fn validate_generator(&self) -> Result<()> {
        if self.size < 2 || !self.size.is_power_of_two() {
            return Err(Error::invalid(format!("painting size {} is not a power of two", self.size)));
        }
        let d = self.depth();
        if d == 0 || (1usize << d) > self.size {
            return Err(Error::invalid(format!("U-Net depth {d} does not fit size {}", self.size)));
        }
        if self.lambda_l1 < 0.0 || self.adv_weight < 0.0 {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if self.width == 0 {
            return Err(Error::invalid("generator width must be positive"));
        }
        Ok(())
    }

    pub fn validate_discriminator(&self) -> Result<()> {
        if self.disc_width == 0 || self.pack == 0 || self.batch == 0 {
            return Err(Error::invalid("discriminator width, pack and batch must be positive"));
        }
        if !self.batch.is_multiple_of(self.pack) {
            return Err(Error::invalid(format!("batch {} not divisible by pack {}", self.batch, self.pack)));
        }
        if self.disc_layers == 0 || self.size >> self.disc_layers < 4 {
            return Err(Error::invalid(format!(
                "{} discriminator layers leave less than 4×4 of a {} input",
                self.disc_layers, self.size
            )));
        }
        Ok(())
    }

    fn level_width(&self, level: usize) -> usize {
        self.width * (1usize << (level - 1)).min(8)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Down {
    conv: Conv,
    bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
struct Up {
    conv: Conv,
    bn: Option<BatchNorm>,
    dropout: bool,
}

/// Channel bookkeeping of one decoder level, innermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderLevel {
    pub stream_channels: usize,
    pub skip_channels: usize,
    pub input_channels: usize,
    pub output_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetGenerator {
    config: PaintConfig,
    params: ParamSet,
    /// `downs[i]` produces encoder level `i + 1`.
    downs: Vec<Down>,
    /// `ups[i]` consumes encoder level `i + 1` (plus the stream from `ups[i + 1]`).
    ups: Vec<Up>,
}

impl UNetGenerator {
    pub fn new(config: PaintConfig, prefix: &str, rng: &mut Stream) -> Result<Self> {
        config.validate_generator()?;
        let d = config.depth();
        let mut params = ParamSet::new();
        let n = |s: &str| qualified(prefix, s);
        let mut downs = Vec::with_capacity(d);
        for level in 1..=d {
            let cin = if level == 1 { EDGE_CHANNELS } else { config.level_width(level - 1) };
            let cout = config.level_width(level);
            let normed = level > 1 && level < d;
            let spec = ConvSpec {
                in_channels: cin,
                out_channels: cout,
                kernel: 4,
                stride: 2,
                padding: 1,
                bias: !normed,
                kind: ConvKind::Forward,
            };
            let conv = Conv::new(&mut params, &n(&format!("down{level}")), spec, rng);
            let bn = normed.then(|| BatchNorm::new(&mut params, &n(&format!("down{level}_bn")), cout));
            downs.push(Down { conv, bn });
        }
        let mut ups = Vec::with_capacity(d);
        for level in 1..=d {
            let cin = if level == d { config.level_width(d) } else { 2 * config.level_width(level) };
            let outer = level == 1;
            let cout = if outer { PAINT_CHANNELS } else { config.level_width(level - 1) };
            let spec = ConvSpec {
                in_channels: cin,
                out_channels: cout,
                kernel: 4,
                stride: 2,
                padding: 1,
                bias: outer,
                kind: ConvKind::Transposed,
            };
            let conv = Conv::new(&mut params, &n(&format!("up{level}")), spec, rng);
            let bn = (!outer).then(|| BatchNorm::new(&mut params, &n(&format!("up{level}_bn")), cout));
            // Innermost three decoder levels, never the output level.
            let dropout = !outer && level + 3 > d;
            ups.push(Up { conv, bn, dropout });
        }
        Ok(UNetGenerator { config, params, downs, ups })
    }

    pub fn config(&self) -> &PaintConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn depth(&self) -> usize {
        self.downs.len()
    }

    /// Decoder channel layout, innermost level first.
    pub fn decoder_levels(&self) -> Vec<DecoderLevel> {
        let d = self.depth();
        (1..=d)
            .rev()
            .map(|level| {
                let up = &self.ups[level - 1];
                let (stream, skip) = if level == d {
                    (self.downs[d - 1].conv.out_channels, 0)
                } else {
                    (self.ups[level].conv.out_channels, self.downs[level - 1].conv.out_channels)
                };
                DecoderLevel {
                    stream_channels: stream,
                    skip_channels: skip,
                    input_channels: up.conv.in_channels,
                    output_channels: up.conv.out_channels,
                }
            })
            .collect()
    }

    pub fn dropout_levels(&self) -> Vec<usize> {
        self.ups.iter().enumerate().filter(|(_, u)| u.dropout).map(|(i, _)| i + 1).collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let s = self.config.size;
        if shape.len() == 4 && shape[2] == shape[3] && shape[2] > 0 && !shape[2].is_power_of_two() {
            return Err(Error::invalid(format!("edge map side {} is not a power of two", shape[2])));
        }
        if shape.len() != 4 || shape[1] != EDGE_CHANNELS || shape[2] != s || shape[3] != s {
            return Err(Error::shape("unet_forward", format!("expected N×1×{s}×{s}, found {shape:?}")));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, edges: Var, fwd: &mut Forward<'_>) -> Result<Var> {
        self.check_input(g.shape(edges))?;
        let slope = T::from_f64(LEAKY_SLOPE);
        let mut skips = Vec::with_capacity(self.depth());
        let mut h = edges;
        for (i, down) in self.downs.iter().enumerate() {
            if i > 0 {
                h = g.leaky_relu(h, slope)?;
            }
            h = down.conv.forward(g, p, h)?;
            if let Some(bn) = &down.bn {
                h = bn.forward(g, p, &self.params, h, fwd)?;
            }
            skips.push(h);
        }
        let d = self.depth();
        for level in (1..=d).rev() {
            let up = &self.ups[level - 1];
            if level < d {
                h = g.concat_channels(h, skips[level - 1])?;
            }
            h = g.relu(h)?;
            h = up.conv.forward(g, p, h)?;
            if let Some(bn) = &up.bn {
                h = bn.forward(g, p, &self.params, h, fwd)?;
            }
            if up.dropout {
                h = fwd.dropout(g, h, self.config.dropout)?;
            }
        }
        g.tanh(h)
    }

    /// Eval-mode paintings `N×3×S×S` for edge maps `N×1×S×S` in `[-1, 1]`.
    pub fn translate(&self, edges: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(edges.shape())?;
        let mut g = Graph::<f32>::new();
        let p = self.params.bind(&mut g, false);
        let e = g.constant(edges.clone());
        let out = self.forward(&mut g, &p, e, &mut Forward::eval())?;
        Ok(g.value(out).clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDiscriminator {
    config: PaintConfig,
    params: ParamSet,
    layers: Vec<Down>,
    out: Conv,
}

impl PatchDiscriminator {
    pub fn new(config: PaintConfig, prefix: &str, rng: &mut Stream) -> Result<Self> {
        config.validate_discriminator()?;
        let mut params = ParamSet::new();
        let n = |s: &str| qualified(prefix, s);
        let width = |i: usize| config.disc_width * (1usize << i).min(8);
        let mut layers = Vec::new();
        let mut cin = config.pack * (EDGE_CHANNELS + PAINT_CHANNELS);
        for i in 0..=config.disc_layers {
            let stride = if i < config.disc_layers { 2 } else { 1 };
            let normed = i > 0;
            let spec = ConvSpec {
                in_channels: cin,
                out_channels: width(i),
                kernel: 4,
                stride,
                padding: 1,
                bias: !normed,
                kind: ConvKind::Forward,
            };
            let conv = Conv::new(&mut params, &n(&format!("conv{i}")), spec, rng);
            let bn = normed.then(|| BatchNorm::new(&mut params, &n(&format!("conv{i}_bn")), width(i)));
            layers.push(Down { conv, bn });
            cin = width(i);
        }
        let spec = ConvSpec {
            in_channels: cin,
            out_channels: 1,
            kernel: 4,
            stride: 1,
            padding: 1,
            bias: true,
            kind: ConvKind::Forward,
        };
        let out = Conv::new(&mut params, &n("out"), spec, rng);
        Ok(PatchDiscriminator { config, params, layers, out })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].conv.in_channels
    }

    /// Score map for packed pairs `M×(k·4)×S×S`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, pairs: Var, fwd: &mut Forward<'_>) -> Result<Var> {
        let s = g.shape(pairs);
        let (c, side) = (self.input_channels(), self.config.size);
        if s.len() != 4 || s[1] != c || s[2] != side || s[3] != side {
            return Err(Error::shape("patch_discriminator", format!("input {s:?}, expected M×{c}×{side}×{side}")));
        }
        let mut h = pairs;
        for layer in &self.layers {
            h = layer.conv.forward(g, p, h)?;
            if let Some(bn) = &layer.bn {
                h = bn.forward(g, p, &self.params, h, fwd)?;
            }
            h = g.leaky_relu(h, T::from_f64(LEAKY_SLOPE))?;
        }
        self.out.forward(g, p, h)
    }
}

/// Channel-concatenates edges with paintings and packs `k` pairs per sample.
pub fn pair_and_pack<T: Scalar>(g: &mut Graph<T>, edges: Var, paintings: Var, k: usize) -> Result<Var> {
    let pair = g.concat_channels(edges, paintings)?;
    crate::sketch::pac_pack_var(g, pair, k)
}

fn bce_against<T: Scalar>(g: &mut Graph<T>, logits: Var, target: f64) -> Result<Var> {
    let t = g.constant(Tensor::full(g.shape(logits), T::from_f64(target)));
    g.bce_with_logits(logits, t)
}

/// `½[bce(real, 1) + bce(fake, 0)]`.
pub fn paint_d_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let r = bce_against(g, d_real, 1.0)?;
    let f = bce_against(g, d_fake, 0.0)?;
    let s = g.add(r, f)?;
    g.scale(s, T::from_f64(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenLossVars {
    pub total: Var,
    pub adversarial: Var,
    pub l1: Var,
}

/// `adv_weight · bce(fake_scores, 1) + lambda_l1 · l1(fake, target)`.
pub fn paint_g_loss<T: Scalar>(
    g: &mut Graph<T>,
    d_fake: Var,
    fake: Var,
    target: Var,
    cfg: &PaintConfig,
) -> Result<GenLossVars> {
    let l1 = g.l1(fake, target)?;
    let adversarial = bce_against(g, d_fake, 1.0)?;
    let a = g.scale(adversarial, T::from_f64(cfg.adv_weight))?;
    let r = g.scale(l1, T::from_f64(cfg.lambda_l1))?;
    let total = g.add(a, r)?;
    Ok(GenLossVars { total, adversarial, l1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaintLosses<T = f32> {
    pub loss_d: T,
    pub loss_g: T,
    pub adversarial: T,
    pub l1: T,
}

/// Both objectives evaluated on one set of scores.
pub fn paint_losses<T: Scalar>(
    g: &mut Graph<T>,
    d_real: Var,
    d_fake: Var,
    fake: Var,
    target: Var,
    cfg: &PaintConfig,
) -> Result<PaintLosses<T>> {
    if g.shape(fake) != g.shape(target) {
        return Err(Error::shape("paint_losses", format!("fake {:?} vs target {:?}", g.shape(fake), g.shape(target))));
    }
    let d = paint_d_loss(g, d_real, d_fake)?;
    let gl = paint_g_loss(g, d_fake, fake, target, cfg)?;
    let v = |g: &Graph<T>, x: Var| g.value(x).data()[0];
    Ok(PaintLosses { loss_d: v(g, d), loss_g: v(g, gl.total), adversarial: v(g, gl.adversarial), l1: v(g, gl.l1) })
}

#[derive(Debug, Clone)]
pub struct PaintGan {
    pub gen: UNetGenerator,
    pub disc: PatchDiscriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    dropout: Stream,
}

impl PaintGan {
    pub const GEN_PREFIX: &'static str = "paint.gen";
    pub const DISC_PREFIX: &'static str = "paint.disc";

    pub fn new(config: PaintConfig, rng: &mut Stream) -> Result<Self> {
        let gen = UNetGenerator::new(config, Self::GEN_PREFIX, &mut rng.derive("paint.gen.init"))?;
        let disc = PatchDiscriminator::new(config, Self::DISC_PREFIX, &mut rng.derive("paint.disc.init"))?;
        let gen_opt = gen.params().adam(config.adam);
        let disc_opt = disc.params().adam(config.adam);
        Ok(PaintGan { gen, disc, gen_opt, disc_opt, dropout: rng.derive("paint.dropout") })
    }

    pub fn config(&self) -> &PaintConfig {
        self.gen.config()
    }

    /// Discriminator update on real vs detached fake pairs, then a generator
    /// update. `edges` is `N×1×S×S`, `paintings` `N×3×S×S`, both in `[-1, 1]`.
    pub fn train_step(&mut self, edges: &Tensor<f32>, paintings: &Tensor<f32>) -> Result<PaintLosses> {
        let cfg = *self.config();
        let n = edges.shape().first().copied().unwrap_or(0);
        if paintings.shape() != [n, PAINT_CHANNELS, cfg.size, cfg.size] {
            return Err(Error::shape(
                "train_paint_step",
                format!("paintings {:?} do not pair with edges {:?}", paintings.shape(), edges.shape()),
            ));
        }
        if n == 0 || n % cfg.pack != 0 {
            return Err(Error::invalid(format!("batch {n} not divisible by pack size {}", cfg.pack)));
        }

        let mut g = Graph::<f32>::new();
        let gp = self.gen.params().bind(&mut g, false);
        let dp = self.disc.params().bind(&mut g, true);
        let e = g.constant(edges.clone());
        let real = g.constant(paintings.clone());
        let mut gen_fwd = Forward::train(Some(&mut self.dropout));
        let fake = self.gen.forward(&mut g, &gp, e, &mut gen_fwd)?;
        let fake = g.detach(fake);
        let real_pairs = pair_and_pack(&mut g, e, real, cfg.pack)?;
        let fake_pairs = pair_and_pack(&mut g, e, fake, cfg.pack)?;
        let mut disc_fwd = Forward::train(None);
        let d_real = self.disc.forward(&mut g, &dp, real_pairs, &mut disc_fwd)?;
        let d_fake = self.disc.forward(&mut g, &dp, fake_pairs, &mut disc_fwd)?;
        let loss_d = paint_d_loss(&mut g, d_real, d_fake)?;
        g.backward(loss_d)?;
        let loss_d = g.value(loss_d).data()[0];
        self.disc.params_mut().step(&g, &dp, &mut self.disc_opt)?;
        self.disc.params_mut().apply_bn_updates(disc_fwd.into_updates());

        let mut g = Graph::<f32>::new();
        let gp = self.gen.params().bind(&mut g, true);
        let dp = self.disc.params().bind(&mut g, false);
        let e = g.constant(edges.clone());
        let real = g.constant(paintings.clone());
        let mut gen_fwd = Forward::train(Some(&mut self.dropout));
        let fake = self.gen.forward(&mut g, &gp, e, &mut gen_fwd)?;
        let gen_updates = gen_fwd.into_updates();
        let fake_pairs = pair_and_pack(&mut g, e, fake, cfg.pack)?;
        let d_fake = self.disc.forward(&mut g, &dp, fake_pairs, &mut Forward::train(None))?;
        let losses = paint_g_loss(&mut g, d_fake, fake, real, &cfg)?;
        g.backward(losses.total)?;
        let out = PaintLosses {
            loss_d,
            loss_g: g.value(losses.total).data()[0],
            adversarial: g.value(losses.adversarial).data()[0],
            l1: g.value(losses.l1).data()[0],
        };
        self.gen.params_mut().step(&g, &gp, &mut self.gen_opt)?;
        self.gen.params_mut().apply_bn_updates(gen_updates);

        if !self.gen.params().all_finite() || !self.disc.params().all_finite() {
            return Err(Error::NonFinite { what: "paint parameters after update".into() });
        }
        Ok(out)
    }
}
