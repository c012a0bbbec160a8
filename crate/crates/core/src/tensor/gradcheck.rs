//! Central finite-difference gradient checking in 64-bit shadow precision.

use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over all checked elements of `|a - n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input index, element index)` of the worst relative error.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares analytic gradients of `f` against central differences with step
/// `eps`. Every tensor in `inputs` is registered as a differentiable leaf and
/// passed to `f` in order; `f` must return a scalar and be deterministic.
pub fn grad_check<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };
    let (mut g, vars, out) = eval(inputs)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| g.grad_tensor(v)).collect();

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, worst: (0, 0), checked: 0 };
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..a.numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let (gp, _, op) = eval(&work)?;
            let fp = gp.value(op).data()[0];
            work[i].data_mut()[j] = orig - eps;
            let (gm, _, om) = eval(&work)?;
            let fm = gm.value(om).data()[0];
            work[i].data_mut()[j] = orig;

            let numeric = (fp - fm) / (2.0 * eps);
            let an = a.data()[j];
            let abs = (an - numeric).abs();
            let rel = abs / an.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (i, j);
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn linear_layer_is_exact() {
        let mut s = Stream::new(11);
        let x = Tensor::randn(&[3, 4], 1.0, &mut s);
        let w = Tensor::randn(&[2, 4], 1.0, &mut s);
        let b = Tensor::randn(&[2], 1.0, &mut s);
        let r = grad_check(&[x, w, b], 1e-3, |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]))?;
            g.mean(y)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn corrupted_rule_is_detected() {
        let mut s = Stream::new(12);
        let x = Tensor::randn(&[3, 4], 1.0, &mut s);
        let w = Tensor::randn(&[2, 4], 1.0, &mut s);
        let r = grad_check(&[x, w], 1e-3, |g, v| {
            g.corrupt_backward("linear");
            let y = g.linear(v[0], v[1], None)?;
            g.mean(y)
        })
        .unwrap();
        assert!(r.max_rel_error > 1e-1, "{r:?}");
    }
}
