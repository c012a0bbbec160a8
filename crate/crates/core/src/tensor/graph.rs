//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation pushes its
//! result after its inputs, so node order is a topological order and the
//! backward pass is a single reverse sweep that visits each node once.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{self, ConvGeometry};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Batch statistics produced by a training-mode batch norm, for updating
/// running averages. `var` is the unbiased estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    SubBroadcast(Var, Var),
    Square(Var),
    Mean(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Reshape(Var),
    Concat(Var, Var),
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry },
    ConvTranspose { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, training: bool },
    Dropout { x: Var, mask: Vec<T> },
    L1(Var, Var),
    Mse(Var, Var),
    BceLogits(Var, Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::SubBroadcast(..) => "sub_broadcast",
            Op::Square(..) => "square",
            Op::Mean(..) => "mean",
            Op::Relu(..) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Linear { .. } => "linear",
            Op::Reshape(..) => "reshape",
            Op::Concat(..) => "concat",
            Op::Conv { .. } => "conv2d",
            Op::ConvTranspose { .. } => "conv_transpose2d",
            Op::BatchNorm { .. } => "batch_norm2d",
            Op::Dropout { .. } => "dropout",
            Op::L1(..) => "l1",
            Op::Mse(..) => "mse",
            Op::BceLogits(..) => "bce_with_logits",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    fault: Option<&'static str>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new(), fault: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Scales the backward rule of every op named `op` by 1.5. Exists so the
    /// gradient checker can be shown to catch a broken rule.
    #[doc(hidden)]
    pub fn corrupt_backward(&mut self, op: &'static str) {
        self.fault = Some(op);
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Registers an `f32` tensor at this graph's precision.
    pub fn leaf_f32(&mut self, value: &Tensor<f32>, requires_grad: bool) -> Var {
        self.leaf(value.cast(), requires_grad)
    }

    /// Constant copy of `v`'s current value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Graph::backward`], if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v` as a tensor; zeros when `v` was not reached.
    pub fn grad_tensor(&self, v: Var) -> Tensor<T> {
        let shape = self.shape(v);
        match self.grad(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(shape),
        }
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { what: format!("forward {}", op.name()) });
        }
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, requires_grad, op))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn map(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(x.shape(), data)?;
        self.push_op(value, &[a], op)
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.shape(), data)?;
        self.push_op(value, &[a, b], op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, Op::Mul(a, b), |p, q| p * q)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.map(a, Op::Scale(a, c), |v| v * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        self.map(a, Op::AddScalar(a), |v| v + c)
    }

    /// `x - s` with the one-element `s` broadcast over `x`.
    pub fn sub_broadcast(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::shape("sub_broadcast", format!("subtrahend {:?} is not a scalar", self.shape(s))));
        }
        let c = self.value(s).data()[0];
        let xv = self.value(x);
        let value = Tensor::new(xv.shape(), xv.data().iter().map(|&v| v - c).collect())?;
        self.push_op(value, &[x, s], Op::SubBroadcast(x, s))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Square(a), |v| v * v)
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let m = x.data().iter().copied().sum::<T>() / T::from_f64(x.numel() as f64);
        self.push_op(Tensor::scalar(m), &[a], Op::Mean(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Relu(a), |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        self.map(a, Op::LeakyRelu(a, slope), |v| if v > T::zero() { v } else { v * slope })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Tanh(a), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// `x (N×K) · wᵀ (K×M) + b`, with `w: M×K`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape("linear", format!("input {xs:?}, weight {ws:?}")));
        }
        let (n, k, m) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(Error::shape("linear", format!("bias {:?}, expected [{m}]", self.shape(b))));
            }
        }
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let xr = &xd[i * k..][..k];
            for o in 0..m {
                let wr = &wd[o * k..][..k];
                out[i * m + o] = xr.iter().zip(wr).map(|(&p, &q)| p * q).sum();
            }
        }
        if let Some(b) = b {
            let bd = self.value(b).data();
            for row in out.chunks_mut(m) {
                for (v, &bb) in row.iter_mut().zip(bd) {
                    *v += bb;
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push_op(Tensor::new(&[n, m], out)?, &inputs, Op::Linear { x, w, b })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push_op(value, &[a], Op::Reshape(a))
    }

    /// Concatenation along the channel axis of two `N×C×H×W` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(Error::shape("concat", format!("{sa:?} vs {sb:?}")));
        }
        let (n, ca, cb, plane) = (sa[0], sa[1], sb[1], sa[2] * sa[3]);
        let shape = [n, ca + cb, sa[2], sa[3]];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            out.extend_from_slice(&ad[i * ca * plane..][..ca * plane]);
            out.extend_from_slice(&bd[i * cb * plane..][..cb * plane]);
        }
        self.push_op(Tensor::new(&shape, out)?, &[a, b], Op::Concat(a, b))
    }

    fn check_bias(&self, op: &'static str, b: Option<Var>, channels: usize) -> Result<()> {
        match b {
            Some(b) if self.shape(b) != [channels] => {
                Err(Error::shape(op, format!("bias {:?}, expected [{channels}]", self.shape(b))))
            }
            _ => Ok(()),
        }
    }

    /// Cross-correlation of `x: N×Cin×H×W` with `w: Cout×Cin×kh×kw`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::forward(self.shape(x), self.shape(w), stride, padding)?;
        self.check_bias("conv2d", b, geom.out_channels)?;
        let mut out = vec![T::zero(); geom.output_len()];
        conv::corr_forward(&geom, self.value(x).data(), self.value(w).data(), &mut out);
        let plane = geom.out_height * geom.out_width;
        if let Some(b) = b {
            conv::add_channel_bias(&mut out, self.value(b).data(), geom.batch, plane);
        }
        let shape = [geom.batch, geom.out_channels, geom.out_height, geom.out_width];
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push_op(Tensor::new(&shape, out)?, &inputs, Op::Conv { x, w, b, geom })
    }

    /// Transposed convolution of `x: N×Cin×H×W` with `w: Cin×Cout×kh×kw`; the
    /// adjoint of [`Graph::conv2d`] under the same weight, stride and padding.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::transposed(self.shape(x), self.shape(w), stride, padding)?;
        self.check_bias("conv_transpose2d", b, geom.in_channels)?;
        let mut out = vec![T::zero(); geom.input_len()];
        conv::corr_input_grad(&geom, self.value(x).data(), self.value(w).data(), &mut out);
        if let Some(b) = b {
            conv::add_channel_bias(&mut out, self.value(b).data(), geom.batch, geom.height * geom.width);
        }
        let shape = [geom.batch, geom.in_channels, geom.height, geom.width];
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push_op(Tensor::new(&shape, out)?, &inputs, Op::ConvTranspose { x, w, b, geom })
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(Error::shape("batch_norm2d", format!("expected N×C×H×W, got {s:?}")));
        }
        let c = s[1];
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(
                "batch_norm2d",
                format!("{c} channels but gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        Ok((s[0], c, s[2] * s[3]))
    }

    fn bn_apply(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], inv_std: Vec<T>, training: bool) -> Result<Var> {
        let (n, c, plane) = self.bn_check(x, gamma, beta)?;
        let xv = self.value(x);
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut out = vec![T::zero(); xv.numel()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    let h = (xv.data()[j] - mean[ch]) * inv_std[ch];
                    xhat[j] = h;
                    out[j] = g[ch] * h + bt[ch];
                }
            }
        }
        let value = Tensor::new(xv.shape(), out)?;
        self.push_op(value, &[x, gamma, beta], Op::BatchNorm { x, gamma, beta, xhat, inv_std, training })
    }

    /// Per-channel normalization with batch statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        let (n, c, plane) = self.bn_check(x, gamma, beta)?;
        let count = n * plane;
        let xd = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let vals = || (0..n).flat_map(move |i| xd[(i * c + ch) * plane..][..plane].iter().copied());
            let m = vals().sum::<T>() / T::from_f64(count as f64);
            mean[ch] = m;
            var[ch] = vals().map(|v| (v - m) * (v - m)).sum::<T>() / T::from_f64(count as f64);
        }
        let inv_std = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
        let unbiased = T::from_f64(count as f64 / count.saturating_sub(1).max(1) as f64);
        let stats = BatchStats { var: var.iter().map(|&v| v * unbiased).collect(), mean: mean.clone() };
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true)?;
        Ok((out, stats))
    }

    /// Per-channel normalization with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let (_, c, _) = self.bn_check(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape(
                "batch_norm2d",
                format!("running stats for {} channels, input has {c}", mean.len()),
            ));
        }
        let inv_std = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
        self.bn_apply(x, gamma, beta, mean, inv_std, false)
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1/(1-p)`.
    pub fn dropout(&mut self, x: Var, p: f64, stream: &mut Stream) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.numel()).map(|_| if stream.uniform() < p { T::zero() } else { keep }).collect();
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(xv.shape(), data)?;
        self.push_op(value, &[x], Op::Dropout { x, mask })
    }

    /// `mean |a - b|`.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1", a, b)?;
        let n = T::from_f64(self.value(a).numel() as f64);
        let s = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| (p - q).abs()).sum::<T>();
        self.push_op(Tensor::scalar(s / n), &[a, b], Op::L1(a, b))
    }

    /// `mean (a - b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = T::from_f64(self.value(a).numel() as f64);
        let s = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>();
        self.push_op(Tensor::scalar(s / n), &[a, b], Op::Mse(a, b))
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`,
    /// evaluated in the overflow-free form `max(x,0) - x·t + ln(1 + e^-|x|)`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        self.same_shape("bce_with_logits", logits, targets)?;
        let n = T::from_f64(self.value(logits).numel() as f64);
        let s = self
            .value(logits)
            .data()
            .iter()
            .zip(self.value(targets).data())
            .map(|(&x, &t)| x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p())
            .sum::<T>();
        self.push_op(Tensor::scalar(s / n), &[logits, targets], Op::BceLogits(logits, targets))
    }

    /// Fills gradients of every node that `loss` depends on. Previous
    /// gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(gy) = self.grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                self.grads[i] = Some(gy);
                continue;
            }
            let mut contributions = self.node_backward(i, &gy);
            if self.fault == Some(self.nodes[i].op.name()) {
                let k = T::from_f64(1.5);
                for (_, g) in &mut contributions {
                    g.iter_mut().for_each(|v| *v *= k);
                }
            }
            for (v, g) in contributions {
                if !g.iter().all(|x| x.is_finite()) {
                    return Err(Error::NonFinite { what: format!("backward {} (node {i})", self.nodes[i].op.name()) });
                }
                match &mut self.grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    slot => *slot = Some(g),
                }
            }
            self.grads[i] = Some(gy);
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn node_backward(&self, i: usize, gy: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let mut out: Vec<(Var, Vec<T>)> = Vec::new();
        let mut emit = |v: Var, f: &dyn Fn() -> Vec<T>| {
            if self.needs(v) {
                out.push((v, f()));
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                emit(a, &|| gy.to_vec());
                emit(b, &|| gy.to_vec());
            }
            &Op::Sub(a, b) => {
                emit(a, &|| gy.to_vec());
                emit(b, &|| gy.iter().map(|&g| -g).collect());
            }
            &Op::Mul(a, b) => {
                emit(a, &|| gy.iter().zip(val(b)).map(|(&g, &q)| g * q).collect());
                emit(b, &|| gy.iter().zip(val(a)).map(|(&g, &p)| g * p).collect());
            }
            &Op::Scale(a, c) => emit(a, &|| gy.iter().map(|&g| g * c).collect()),
            &Op::AddScalar(a) => emit(a, &|| gy.to_vec()),
            &Op::SubBroadcast(x, s) => {
                emit(x, &|| gy.to_vec());
                emit(s, &|| vec![-gy.iter().copied().sum::<T>()]);
            }
            &Op::Square(a) => {
                emit(a, &|| gy.iter().zip(val(a)).map(|(&g, &x)| g * (x + x)).collect());
            }
            &Op::Mean(a) => {
                let n = val(a).len();
                emit(a, &|| vec![gy[0] / T::from_f64(n as f64); n]);
            }
            &Op::Relu(a) => {
                emit(a, &|| gy.iter().zip(val(a)).map(|(&g, &x)| if x > T::zero() { g } else { T::zero() }).collect());
            }
            &Op::LeakyRelu(a, slope) => {
                emit(a, &|| gy.iter().zip(val(a)).map(|(&g, &x)| if x > T::zero() { g } else { g * slope }).collect());
            }
            &Op::Tanh(a) => {
                let y = node.value.data();
                emit(a, &|| gy.iter().zip(y).map(|(&g, &t)| g * (T::one() - t * t)).collect());
            }
            &Op::Sigmoid(a) => {
                let y = node.value.data();
                emit(a, &|| gy.iter().zip(y).map(|(&g, &s)| g * s * (T::one() - s)).collect());
            }
            &Op::Linear { x, w, b } => {
                let (n, k) = (self.nodes[x.0].value.dim(0), self.nodes[x.0].value.dim(1));
                let m = self.nodes[w.0].value.dim(0);
                emit(x, &|| {
                    let wd = val(w);
                    let mut gx = vec![T::zero(); n * k];
                    for r in 0..n {
                        for o in 0..m {
                            let g = gy[r * m + o];
                            for (acc, &wv) in gx[r * k..][..k].iter_mut().zip(&wd[o * k..][..k]) {
                                *acc += g * wv;
                            }
                        }
                    }
                    gx
                });
                emit(w, &|| {
                    let xd = val(x);
                    let mut gw = vec![T::zero(); m * k];
                    for r in 0..n {
                        for o in 0..m {
                            let g = gy[r * m + o];
                            for (acc, &xv) in gw[o * k..][..k].iter_mut().zip(&xd[r * k..][..k]) {
                                *acc += g * xv;
                            }
                        }
                    }
                    gw
                });
                if let Some(b) = b {
                    emit(b, &|| {
                        let mut gb = vec![T::zero(); m];
                        for row in gy.chunks(m) {
                            gb.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                        }
                        gb
                    });
                }
            }
            &Op::Reshape(a) => emit(a, &|| gy.to_vec()),
            &Op::Concat(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (n, ca, cb, plane) = (sa[0], sa[1], sb[1], sa[2] * sa[3]);
                let stride = (ca + cb) * plane;
                emit(a, &|| (0..n).flat_map(|i| gy[i * stride..][..ca * plane].iter().copied()).collect());
                emit(b, &|| (0..n).flat_map(|i| gy[i * stride + ca * plane..][..cb * plane].iter().copied()).collect());
            }
            &Op::Conv { x, w, b, ref geom } => {
                emit(x, &|| {
                    let mut gx = vec![T::zero(); geom.input_len()];
                    conv::corr_input_grad(geom, gy, val(w), &mut gx);
                    gx
                });
                emit(w, &|| {
                    let mut gw = vec![T::zero(); geom.weight_len()];
                    conv::corr_weight_grad(geom, val(x), gy, &mut gw);
                    gw
                });
                if let Some(b) = b {
                    emit(b, &|| {
                        let mut gb = vec![T::zero(); geom.out_channels];
                        conv::channel_sum(gy, &mut gb, geom.batch, geom.out_height * geom.out_width);
                        gb
                    });
                }
            }
            &Op::ConvTranspose { x, w, b, ref geom } => {
                // Forward was `y = corrᵀ(x, w)`, so `y` sits on the correlation's input side.
                emit(x, &|| {
                    let mut gx = vec![T::zero(); geom.output_len()];
                    conv::corr_forward(geom, gy, val(w), &mut gx);
                    gx
                });
                emit(w, &|| {
                    let mut gw = vec![T::zero(); geom.weight_len()];
                    conv::corr_weight_grad(geom, gy, val(x), &mut gw);
                    gw
                });
                if let Some(b) = b {
                    emit(b, &|| {
                        let mut gb = vec![T::zero(); geom.in_channels];
                        conv::channel_sum(gy, &mut gb, geom.batch, geom.height * geom.width);
                        gb
                    });
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, training } => {
                let s = self.nodes[x.0].value.shape();
                let (n, c, plane) = (s[0], s[1], s[2] * s[3]);
                let idx = move |ch: usize| (0..n).flat_map(move |i| (i * c + ch) * plane..(i * c + ch + 1) * plane);
                let sum_g: Vec<T> = (0..c).map(|ch| idx(ch).map(|j| gy[j]).sum()).collect();
                let sum_gx: Vec<T> = (0..c).map(|ch| idx(ch).map(|j| gy[j] * xhat[j]).sum()).collect();
                emit(*x, &|| {
                    let g = val(*gamma);
                    let mut gx = vec![T::zero(); gy.len()];
                    let m = T::from_f64((n * plane) as f64);
                    for ch in 0..c {
                        let k = g[ch] * inv_std[ch];
                        for j in idx(ch) {
                            gx[j] = if *training {
                                k / m * (m * gy[j] - sum_g[ch] - xhat[j] * sum_gx[ch])
                            } else {
                                k * gy[j]
                            };
                        }
                    }
                    gx
                });
                emit(*gamma, &|| sum_gx.clone());
                emit(*beta, &|| sum_g.clone());
            }
            Op::Dropout { x, mask } => emit(*x, &|| gy.iter().zip(mask).map(|(&g, &m)| g * m).collect()),
            &Op::L1(a, b) => {
                let n = T::from_f64(val(a).len() as f64);
                let d: Vec<T> = val(a)
                    .iter()
                    .zip(val(b))
                    .map(|(&p, &q)| {
                        let s = if p > q {
                            T::one()
                        } else if p < q {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        gy[0] * s / n
                    })
                    .collect();
                emit(a, &|| d.clone());
                emit(b, &|| d.iter().map(|&v| -v).collect());
            }
            &Op::Mse(a, b) => {
                let n = T::from_f64(val(a).len() as f64);
                let two = T::from_f64(2.0);
                let d: Vec<T> = val(a).iter().zip(val(b)).map(|(&p, &q)| gy[0] * two * (p - q) / n).collect();
                emit(a, &|| d.clone());
                emit(b, &|| d.iter().map(|&v| -v).collect());
            }
            &Op::BceLogits(x, t) => {
                let n = T::from_f64(val(x).len() as f64);
                emit(x, &|| val(x).iter().zip(val(t)).map(|(&l, &tt)| gy[0] * (sigmoid(l) - tt) / n).collect());
                emit(t, &|| val(x).iter().map(|&l| -gy[0] * l / n).collect());
            }
        }
        out
    }

    /// Human-readable op listing, one node per line.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            s.push_str(&format!("{i:4} {:<18} {:?}\n", n.op.name(), n.value.shape()));
        }
        s
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        (T::one() + (-v).exp()).recip()
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
