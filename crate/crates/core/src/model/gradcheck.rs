use super::{Gradients, Network};
use crate::error::Result;
use crate::features::FeatureFrame;
use crate::nn::{
    finite_difference_check, residual_block_forward, GradCheckReport, Layer, Sequential, Tensor,
};
use crate::train::cross_entropy_loss;

/// Distance of the forward pass to the nearest non-differentiable point: the
/// smallest `|pre-activation|` of any ReLU (including those inside residual
/// blocks) and the smallest gap between the two largest entries of any
/// max-pool window.
///
/// Central differences are only meaningful when this margin is large
/// compared with the activation shift caused by the finite-difference step.
pub fn kink_margin(net: &Network, frames: &[FeatureFrame]) -> Result<f64> {
    let mut margin = f64::INFINITY;
    let mut stacked = Vec::new();
    for f in frames {
        let x = Tensor::new(&net.frame_shape(), f.data().to_vec())?;
        margin = margin.min(sequential_margin(&net.cnn, &x)?);
        stacked.extend(net.cnn.forward(&x)?.into_data());
    }
    let width = stacked.len() / frames.len().max(1);
    let x = Tensor::new(&[frames.len(), width], stacked)?;
    Ok(margin.min(sequential_margin(&net.tcn, &x)?))
}

fn sequential_margin(seq: &Sequential, x: &Tensor) -> Result<f64> {
    let trace = seq.trace(x)?;
    let mut margin = f64::INFINITY;
    let abs_min = |t: &Tensor| t.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    for (i, layer) in seq.layers.iter().enumerate() {
        let input = if i == 0 { x } else { &trace[i - 1] };
        match layer {
            Layer::Relu => margin = margin.min(abs_min(input)),
            Layer::Residual(r) => {
                let (_, pre) =
                    residual_block_forward(input, &r.conv.weight, &r.conv.bias, r.conv.dilation)?;
                margin = margin.min(abs_min(&pre));
            }
            Layer::MaxPool2d(p) => {
                let [h, w, c] = *input.shape() else { continue };
                let d = input.data();
                for oh in 0..h / p.kh {
                    for ow in 0..w / p.kw {
                        for ch in 0..c {
                            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                            for i in 0..p.kh {
                                for j in 0..p.kw {
                                    let v = d[((oh * p.kh + i) * w + ow * p.kw + j) * c + ch];
                                    if v > a {
                                        (a, b) = (v, a);
                                    } else if v > b {
                                        b = v;
                                    }
                                }
                            }
                            // zeros clipped by a preceding ReLU tie harmlessly;
                            // their kink is the ReLU's and is counted there
                            if b.is_finite() && !(a == 0.0 && b == 0.0) {
                                margin = margin.min(a - b);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(margin)
}

/// Checks [`Network::backward`] against central differences of the
/// per-step cross-entropy loss for one labeled sequence.
pub fn grad_check(
    net: &Network,
    frames: &[FeatureFrame],
    label: usize,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (logits, tape) = net.forward_train(frames)?;
    let (_, grad_logits) = cross_entropy_loss(&logits, label)?;
    let grads = net.backward(&tape, &grad_logits)?;
    grad_check_against(net, frames, label, eps, tolerance, &grads)
}

/// Same as [`grad_check`] but with caller-supplied analytic gradients.
pub fn grad_check_against(
    net: &Network,
    frames: &[FeatureFrame],
    label: usize,
    eps: f64,
    tolerance: f64,
    analytic: &Gradients,
) -> Result<GradCheckReport> {
    finite_difference_check(net, &analytic.0, eps, tolerance, |n| {
        Ok(cross_entropy_loss(&n.forward_sequence(frames)?, label)?.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::model::{build_tinyradarnn, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (Network, Vec<FeatureFrame>) {
        let cfg = ModelConfig::toy();
        let mut net = build_tinyradarnn(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        // non-zero biases keep pre-activations off the ReLU kink
        for p in net.params_mut() {
            if p.shape().len() == 1 {
                p.data_mut()
                    .iter_mut()
                    .for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
        }
        let frames = (0..cfg.time_steps)
            .map(|_| {
                let data = (0..cfg.tw * cfg.rp)
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect();
                FeatureFrame::new(cfg.tw, cfg.rp, 1, data, FeatureKind::Rfdm).unwrap()
            })
            .collect();
        (net, frames)
    }

    #[test]
    fn toy_network_passes() {
        let (net, frames) = setup(7);
        let report = grad_check(&net, &frames, 1, 1e-5, 1e-5).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.per_param.len(), net.params().len());
    }

    #[test]
    fn kink_margin_by_hand() {
        use crate::nn::MaxPool2d;
        let pool = Sequential::new(vec![Layer::MaxPool2d(MaxPool2d { kh: 1, kw: 2 })]);
        let x = |v: Vec<f64>| Tensor::new(&[1, v.len(), 1], v).unwrap();
        assert_eq!(
            sequential_margin(&pool, &x(vec![3.0, 1.0, 2.0, 2.5])).unwrap(),
            0.5
        );
        assert_eq!(sequential_margin(&pool, &x(vec![3.0, 3.0])).unwrap(), 0.0);
        assert_eq!(
            sequential_margin(&pool, &x(vec![0.0, 0.0, 1.0, 0.75])).unwrap(),
            0.25
        );
        let relu = Sequential::new(vec![Layer::Relu]);
        assert_eq!(
            sequential_margin(&relu, &Tensor::new(&[2], vec![-0.25, 0.5]).unwrap()).unwrap(),
            0.25
        );
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let (net, frames) = setup(8);
        let (logits, tape) = net.forward_train(&frames).unwrap();
        let (_, g) = cross_entropy_loss(&logits, 2).unwrap();
        let mut grads = net.backward(&tape, &g).unwrap();
        grads.scale(-1.0);
        let report = grad_check_against(&net, &frames, 2, 1e-5, 1e-5, &grads).unwrap();
        assert!(!report.passed);
        assert!(
            (report.max_rel_error - 2.0).abs() < 1e-3,
            "{}",
            report.max_rel_error
        );
    }
}
