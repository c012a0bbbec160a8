//! Named parameter storage and the handful of layers both GANs are built from.
//!
//! Models keep their weights as `f32` tensors in a [`ParamSet`]. A forward
//! pass binds the set into a [`Graph`] of any precision, so the same model
//! code runs for training (`f32`) and for gradient checks (`f64`).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, Scalar, Tensor, Var};

/// Standard deviation of the Gaussian used for conv and dense weights.
pub const INIT_STD: f64 = 0.02;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    name: String,
    tensor: Tensor<f32>,
    trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<Entry>,
}

/// A [`ParamSet`] registered in a particular graph.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps caller-made leaves, one per entry of the set, in entry order.
    /// Used to drive a model from externally owned tensors such as the
    /// perturbed inputs of a gradient check.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<f32>, trainable: bool) -> ParamId {
        self.entries.push(Entry { name: name.into(), tensor, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<f32> {
        &self.entries[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All tensors with their names, trainable or not.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    pub fn trainable_shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor.shape())
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.name.as_str())
    }

    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor.numel()).sum()
    }

    pub fn adam(&self, config: AdamConfig) -> AdamState {
        AdamState::new(config, self.trainable_shapes())
    }

    /// Registers every tensor in `g`. Trainable tensors track gradients only
    /// when `track` is set; buffers never do.
    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, track: bool) -> Bound {
        let vars = self.entries.iter().map(|e| g.leaf_f32(&e.tensor, track && e.trainable)).collect();
        Bound { vars }
    }

    /// Gradients of the trainable tensors after `g.backward`, in order.
    pub fn grads<T: Scalar>(&self, g: &Graph<T>, bound: &Bound) -> Vec<Tensor<f32>> {
        self.entries
            .iter()
            .zip(&bound.vars)
            .filter(|(e, _)| e.trainable)
            .map(|(_, &v)| g.grad_tensor(v).cast())
            .collect()
    }

    /// Applies one Adam step with the gradients held by `g`; returns the
    /// Euclidean norm of the parameter change.
    pub fn step<T: Scalar>(&mut self, g: &Graph<T>, bound: &Bound, opt: &mut AdamState) -> Result<f64> {
        let grads = self.grads(g, bound);
        let before: Vec<Tensor<f32>> = self.entries.iter().filter(|e| e.trainable).map(|e| e.tensor.clone()).collect();
        let mut params: Vec<&mut Tensor<f32>> =
            self.entries.iter_mut().filter(|e| e.trainable).map(|e| &mut e.tensor).collect();
        adam_step(&mut params, &grads, opt)?;
        let mut sq = 0.0f64;
        for (p, b) in params.iter().zip(&before) {
            for (&x, &y) in p.data().iter().zip(b.data()) {
                sq += f64::from(x - y) * f64::from(x - y);
            }
        }
        Ok(libm::sqrt(sq))
    }

    pub fn apply_bn_updates(&mut self, updates: Vec<BnUpdate>) {
        for u in updates {
            for (id, batch) in [(u.running_mean, u.batch_mean), (u.running_var, u.batch_var)] {
                let run = self.entries[id.0].tensor.data_mut();
                for (r, b) in run.iter_mut().zip(batch) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                }
            }
        }
    }

    /// Replaces every tensor by the one `lookup` returns for its name.
    pub fn load<'a>(&mut self, mut lookup: impl FnMut(&str) -> Option<&'a Tensor<f32>>) -> Result<()> {
        for e in &mut self.entries {
            let t = lookup(&e.name).ok_or_else(|| Error::invalid(format!("missing tensor {}", e.name)))?;
            if t.shape() != e.tensor.shape() {
                return Err(Error::shape(
                    "load",
                    format!("{}: expected {:?}, found {:?}", e.name, e.tensor.shape(), t.shape()),
                ));
            }
            e.tensor = t.clone();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }
}

/// Running-statistics update collected during a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    running_mean: ParamId,
    running_var: ParamId,
    batch_mean: Vec<f32>,
    batch_var: Vec<f32>,
}

/// Mode of a forward pass.
pub struct Forward<'a> {
    training: bool,
    dropout: Option<&'a mut Stream>,
    updates: Vec<BnUpdate>,
}

impl<'a> Forward<'a> {
    /// Running statistics, no dropout.
    pub fn eval() -> Self {
        Forward { training: false, dropout: None, updates: Vec::new() }
    }

    /// Batch statistics; dropout draws from `stream` when given.
    pub fn train(dropout: Option<&'a mut Stream>) -> Self {
        Forward { training: true, dropout, updates: Vec::new() }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn into_updates(self) -> Vec<BnUpdate> {
        self.updates
    }

    pub fn dropout<T: Scalar>(&mut self, g: &mut Graph<T>, x: Var, p: f64) -> Result<Var> {
        match (self.training, self.dropout.as_deref_mut()) {
            (true, Some(stream)) => g.dropout(x, p, stream),
            _ => Ok(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Forward,
    Transposed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub padding: usize,
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
    pub kind: ConvKind,
}

impl Conv {
    pub fn new(params: &mut ParamSet, name: &str, spec: ConvSpec, rng: &mut Stream) -> Self {
        let (i, o, k) = (spec.in_channels, spec.out_channels, spec.kernel);
        let shape = match spec.kind {
            ConvKind::Forward => [o, i, k, k],
            ConvKind::Transposed => [i, o, k, k],
        };
        let weight = params.add(format!("{name}.weight"), Tensor::randn(&shape, INIT_STD, rng), true);
        let bias = spec.bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(&[o]), true));
        Conv {
            weight,
            bias,
            stride: spec.stride,
            padding: spec.padding,
            kind: spec.kind,
            in_channels: i,
            out_channels: o,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let (w, b) = (p.var(self.weight), self.bias.map(|b| p.var(b)));
        match self.kind {
            ConvKind::Forward => g.conv2d(x, w, b, self.stride, self.padding),
            ConvKind::Transposed => g.conv_transpose2d(x, w, b, self.stride, self.padding),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNorm {
    pub fn new(params: &mut ParamSet, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: params.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true),
            beta: params.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: params.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false),
            running_var: params.add(format!("{name}.running_var"), Tensor::full(&[channels], 1.0), false),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        params: &ParamSet,
        x: Var,
        fwd: &mut Forward<'_>,
    ) -> Result<Var> {
        let (gamma, beta) = (p.var(self.gamma), p.var(self.beta));
        let eps = T::from_f64(BN_EPS);
        if fwd.training {
            let (y, stats) = g.batch_norm_train(x, gamma, beta, eps)?;
            fwd.updates.push(BnUpdate {
                running_mean: self.running_mean,
                running_var: self.running_var,
                batch_mean: stats.mean.iter().map(|v| v.as_f32()).collect(),
                batch_var: stats.var.iter().map(|v| v.as_f32()).collect(),
            });
            Ok(y)
        } else {
            let mean: Vec<T> = params.get(self.running_mean).data().iter().map(|&v| T::from_f32(v)).collect();
            let var: Vec<T> = params.get(self.running_var).data().iter().map(|&v| T::from_f32(v)).collect();
            g.batch_norm_eval(x, gamma, beta, &mean, &var, eps)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, inputs: usize, outputs: usize, bias: bool, rng: &mut Stream) -> Self {
        let weight = params.add(format!("{name}.weight"), Tensor::randn(&[outputs, inputs], INIT_STD, rng), true);
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(&[outputs]), true));
        Linear { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.linear(x, p.var(self.weight), self.bias.map(|b| p.var(b)))
    }
}

/// Prefixes every name, e.g. `"sketch.gen"` + `"up0.weight"`.
pub fn qualified(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
