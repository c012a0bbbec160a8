use alloc::format;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.002, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// First/second moment estimates for a list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let (m, v) = shapes.into_iter().map(|s| (Tensor::zeros(s), Tensor::zeros(s))).unzip();
        AdamState { config, m, v, t: 0 }
    }
}

/// One bias-corrected Adam update. Weight decay is added to the gradient
/// (L2 form). `params`, `grads` and the state moments are index-aligned.
pub fn adam_step(params: &mut [&mut Tensor<f32>], grads: &[Tensor<f32>], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} moment slots", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i}: {:?}, grad {:?}, moments {:?}", p.shape(), g.shape(), m.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite { what: format!("gradient of parameter {i}") });
        }
    }
    let c = state.config;
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - libm::pow(c.beta1, t);
    let bc2 = 1.0 - libm::pow(c.beta2, t);
    let step = (c.lr / bc1) as f32;
    let (b1, b2, wd, eps) = (c.beta1 as f32, c.beta2 as f32, c.weight_decay as f32, c.eps as f32);
    let inv_sqrt_bc2 = (1.0 / libm::sqrt(bc2)) as f32;
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let pd = p.data_mut();
        for (j, &gj) in g.data().iter().enumerate() {
            let gj = gj + wd * pd[j];
            let mj = &mut m.data_mut()[j];
            *mj = b1 * *mj + (1.0 - b1) * gj;
            let vj = &mut v.data_mut()[j];
            *vj = b2 * *vj + (1.0 - b2) * gj * gj;
            pd[j] -= step * *mj / (libm::sqrtf(*vj) * inv_sqrt_bc2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f32) -> Tensor<f32> {
        Tensor::scalar(v)
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let mut p = Tensor::new(&[3], alloc::vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), [p.shape()]);
        adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after one step, so the update is lr·g/(|g|+eps).
        let mut p = one(1.0);
        let mut st = AdamState::new(AdamConfig::default(), [p.shape()]);
        adam_step(&mut [&mut p], &[one(2.0)], &mut st).unwrap();
        let expected = 1.0 - 0.002 * 2.0 / (2.0 + 1e-8);
        assert!((f64::from(p.data()[0]) - expected).abs() < 1e-7, "{}", p.data()[0]);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = one(1.0);
        let mut st = AdamState::new(AdamConfig::default(), [p.shape()]);
        let mut prev = p.data()[0];
        for _ in 0..2 {
            adam_step(&mut [&mut p], &[one(0.3)], &mut st).unwrap();
            assert!(p.data()[0] < prev);
            prev = p.data()[0];
        }
        assert_eq!(st.t, 2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = one(1.0);
        let mut st = AdamState::new(AdamConfig::default(), [p.shape()]);
        assert!(adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut st).is_err());
        assert_eq!(st.t, 0);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = one(1.0);
        let mut st = AdamState::new(AdamConfig::default(), [p.shape()]);
        let err = adam_step(&mut [&mut p], &[one(f32::NAN)], &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p.data()[0], 1.0);
    }
}
