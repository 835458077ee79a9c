//! Central finite-difference gradient checking.

use super::{Sequential, Tensor};
use crate::error::{Error, Result};

/// Anything with an ordered list of parameter tensors.
pub trait Parameterized {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_names(&self) -> Vec<String> {
        (0..self.params().len())
            .map(|i| format!("param{i}"))
            .collect()
    }
}

impl Parameterized for Sequential {
    fn params(&self) -> Vec<&Tensor> {
        Sequential::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Sequential::params_mut(self)
    }
}

/// Gradients whose larger magnitude is below this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per parameter tensor.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`; a sign flip scores 2.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares `analytic` against central differences of `loss` with step `eps`,
/// perturbing every scalar parameter of `model` in turn.
pub fn finite_difference_check<M: Parameterized + Clone>(
    model: &M,
    analytic: &[Tensor],
    eps: f64,
    tolerance: f64,
    loss: impl Fn(&M) -> Result<f64>,
) -> Result<GradCheckReport> {
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();
    if analytic.len() != shapes.len()
        || analytic
            .iter()
            .zip(&shapes)
            .any(|(a, s)| a.shape() != s.as_slice())
    {
        return Err(Error::Validation(
            "analytic gradients do not match the model parameters".into(),
        ));
    }
    let names = model.param_names();
    let mut probe = model.clone();
    let mut per_param = Vec::with_capacity(shapes.len());
    for (p, grad) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..grad.len() {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + eps;
            let up = loss(&probe)?;
            probe.params_mut()[p].data_mut()[i] = orig - eps;
            let down = loss(&probe)?;
            probe.params_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
        per_param.push((names[p].clone(), worst));
    }
    let max_rel_error = per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Init, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic_setup() -> (Sequential, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dense = Dense::new(4, 3, Init::He, &mut rng);
        dense.bias = Tensor::new(&[3], vec![0.1, -0.2, 0.3]).unwrap();
        let x = Tensor::from_fn(&[2, 4], |i| (i as f64 - 3.5) * 0.4);
        (Sequential::new(vec![Layer::Dense(dense)]), x)
    }

    fn half_sum_sq(net: &Sequential, x: &Tensor) -> Result<f64> {
        Ok(0.5 * net.forward(x)?.data().iter().map(|v| v * v).sum::<f64>())
    }

    #[test]
    fn linear_net_quadratic_loss() {
        let (net, x) = quadratic_setup();
        let (y, caches) = net.forward_cached(&x).unwrap();
        let (_, grads) = net.backward(&caches, &y).unwrap();
        let report =
            finite_difference_check(&net, &grads, 1e-5, 1e-6, |m| half_sum_sq(m, &x)).unwrap();
        assert!(report.passed);
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn sign_flip_scores_two() {
        let (net, x) = quadratic_setup();
        let (y, caches) = net.forward_cached(&x).unwrap();
        let (_, mut grads) = net.backward(&caches, &y).unwrap();
        grads.iter_mut().for_each(|g| g.scale(-1.0));
        let report =
            finite_difference_check(&net, &grads, 1e-5, 1e-5, |m| half_sum_sq(m, &x)).unwrap();
        assert!(!report.passed);
        assert!((report.max_rel_error - 2.0).abs() < 1e-6);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let (net, x) = quadratic_setup();
        let r = finite_difference_check(&net, &[Tensor::zeros(&[1])], 1e-5, 1e-5, |m| {
            half_sum_sq(m, &x)
        });
        assert!(r.is_err());
    }
}
