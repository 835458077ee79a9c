use super::{QuantLayer, QuantOp, QuantizedNetwork};
use crate::error::{Error, Result};
use crate::features::FeatureFrame;
use crate::nn::Tensor;

/// 8-bit codes of one frame under the network's input params.
pub fn quantize_frame(qnet: &QuantizedNetwork, frame: &FeatureFrame) -> Result<Vec<u8>> {
    let want = [qnet.config.tw, qnet.config.rp, qnet.config.sensors];
    if frame.shape() != want {
        return Err(Error::Validation(format!(
            "frame has shape {:?}, expected {want:?}",
            frame.shape()
        )));
    }
    Ok(frame
        .data()
        .iter()
        .map(|&v| qnet.input.quantize(v) as u8)
        .collect())
}

/// Integer activations between layers.
struct Act {
    shape: Vec<usize>,
    codes: Vec<u8>,
}

enum Output {
    Codes(Act),
    Logits(Tensor),
}

/// `T x classes` dequantized logits computed with integer arithmetic only,
/// apart from the per-layer float rescale.
pub fn quantized_forward_sequence(
    qnet: &QuantizedNetwork,
    frames: &[FeatureFrame],
) -> Result<Tensor> {
    let t = qnet.config.time_steps;
    if frames.len() != t {
        return Err(Error::Validation(format!(
            "expected {t} frames, got {}",
            frames.len()
        )));
    }
    let shape = vec![qnet.config.tw, qnet.config.rp, qnet.config.sensors];
    let mut stacked = Vec::new();
    for frame in frames {
        let mut act = Act {
            shape: shape.clone(),
            codes: quantize_frame(qnet, frame)?,
        };
        for layer in &qnet.cnn {
            act = match run_layer(layer, act)? {
                Output::Codes(a) => a,
                Output::Logits(_) => {
                    return Err(Error::State("CNN layer produced float output".into()))
                }
            };
        }
        stacked.extend_from_slice(&act.codes);
    }
    let width = stacked.len() / t;
    let mut act = Act {
        shape: vec![t, width],
        codes: stacked,
    };
    for (i, layer) in qnet.tcn.iter().enumerate() {
        match run_layer(layer, act)? {
            Output::Codes(a) => act = a,
            Output::Logits(l) if i + 1 == qnet.tcn.len() => return Ok(l),
            Output::Logits(_) => {
                return Err(Error::State(format!(
                    "tcn[{i}] dequantizes before the last layer"
                )))
            }
        }
    }
    Err(Error::State(
        "quantized network does not end in a dequantizing layer".into(),
    ))
}

fn centred(layer: &QuantLayer, codes: &[u8]) -> Vec<i32> {
    codes
        .iter()
        .map(|&q| i32::from(q) - layer.input.zero_point)
        .collect()
}

/// Rescales accumulators into 8-bit codes, or dequantizes them for the last layer.
fn finish(
    layer: &QuantLayer,
    shape: Vec<usize>,
    mut acc: Vec<i32>,
    skip: Option<&[i32]>,
) -> Result<Output> {
    // the residual branch always carries its own ReLU
    if layer.relu || matches!(layer.op, QuantOp::Residual { .. }) {
        acc.iter_mut().for_each(|a| *a = (*a).max(0));
    }
    let m = layer.multiplier();
    let ms = layer.skip_multiplier();
    let real = |i: usize, a: i32| {
        let mut v = f64::from(a) * m;
        if let Some(s) = skip {
            v += f64::from(s[i]) * ms;
        }
        v
    };
    match layer.output {
        Some(o) => {
            let codes = acc
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    (real(i, a).round() as i64 + i64::from(o.zero_point)).clamp(0, 255) as u8
                })
                .collect();
            Ok(Output::Codes(Act { shape, codes }))
        }
        None => Ok(Output::Logits(Tensor::new(
            &shape,
            acc.iter().enumerate().map(|(i, &a)| real(i, a)).collect(),
        )?)),
    }
}

fn expect_dims<const N: usize>(act: &Act, what: &str) -> Result<[usize; N]> {
    act.shape.as_slice().try_into().map_err(|_| {
        Error::Validation(format!("{what} expects a {N}-D input, got {:?}", act.shape))
    })
}

fn run_layer(layer: &QuantLayer, act: Act) -> Result<Output> {
    match layer.op {
        QuantOp::Conv2d { kh, kw, cin, cout } => {
            let [h, w, c] = expect_dims::<3>(&act, "conv2d")?;
            check(c == cin, "conv2d channels")?;
            let x = centred(layer, &act.codes);
            let (ph, pw) = (kh / 2, kw / 2);
            let mut acc = vec![0i32; h * w * cout];
            for oh in 0..h {
                for ow in 0..w {
                    let o = &mut acc[(oh * w + ow) * cout..][..cout];
                    o.copy_from_slice(&layer.bias);
                    for i in 0..kh {
                        let Some(ih) = (oh + i).checked_sub(ph).filter(|&v| v < h) else {
                            continue;
                        };
                        for j in 0..kw {
                            let Some(iw) = (ow + j).checked_sub(pw).filter(|&v| v < w) else {
                                continue;
                            };
                            let xs = &x[(ih * w + iw) * cin..][..cin];
                            let wb = &layer.weight[(i * kw + j) * cin * cout..][..cin * cout];
                            mac(o, xs, wb, cout);
                        }
                    }
                }
            }
            finish(layer, vec![h, w, cout], acc, None)
        }
        QuantOp::CausalConv1d {
            k,
            cin,
            cout,
            dilation,
        } => {
            let [t, c] = expect_dims::<2>(&act, "causal conv")?;
            check(c == cin, "causal conv channels")?;
            let x = centred(layer, &act.codes);
            let acc = causal(&x, t, cin, cout, k, dilation, &layer.weight, &layer.bias);
            finish(layer, vec![t, cout], acc, None)
        }
        QuantOp::Residual {
            k,
            filters,
            dilation,
        } => {
            let [t, c] = expect_dims::<2>(&act, "residual block")?;
            check(c == filters, "residual channels")?;
            let x = centred(layer, &act.codes);
            let acc = causal(
                &x,
                t,
                filters,
                filters,
                k,
                dilation,
                &layer.weight,
                &layer.bias,
            );
            finish(layer, vec![t, filters], acc, Some(&x))
        }
        QuantOp::Dense { n, m } => {
            let rows = match act.shape.as_slice() {
                [t, c] if *c == n => *t,
                [c] if *c == n => 1,
                s => {
                    return Err(Error::Validation(format!(
                        "dense expects width {n}, got {s:?}"
                    )))
                }
            };
            let x = centred(layer, &act.codes);
            let mut acc = Vec::with_capacity(rows * m);
            for r in 0..rows {
                let mut o = layer.bias.clone();
                mac(&mut o, &x[r * n..(r + 1) * n], &layer.weight, m);
                acc.extend(o);
            }
            let shape = if act.shape.len() == 2 {
                vec![rows, m]
            } else {
                vec![m]
            };
            finish(layer, shape, acc, None)
        }
        QuantOp::MaxPool2d { kh, kw } => {
            let [h, w, c] = expect_dims::<3>(&act, "max pool")?;
            let (oh, ow) = (h / kh, w / kw);
            let mut codes = vec![0u8; oh * ow * c];
            for i in 0..oh {
                for j in 0..ow {
                    for ch in 0..c {
                        let mut best = 0u8;
                        for a in 0..kh {
                            for b in 0..kw {
                                best =
                                    best.max(act.codes[((i * kh + a) * w + j * kw + b) * c + ch]);
                            }
                        }
                        codes[(i * ow + j) * c + ch] = best;
                    }
                }
            }
            Ok(Output::Codes(Act {
                shape: vec![oh, ow, c],
                codes,
            }))
        }
        QuantOp::Flatten => Ok(Output::Codes(Act {
            shape: vec![act.codes.len()],
            codes: act.codes,
        })),
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("quantized {what} mismatch")))
    }
}

/// `out[co] += sum_ci x[ci] * w[ci, co]` for a `cin x cout` weight block.
fn mac(out: &mut [i32], x: &[i32], w: &[i16], cout: usize) {
    for (ci, &xv) in x.iter().enumerate() {
        if xv == 0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[ci * cout..(ci + 1) * cout]) {
            *o += xv * i32::from(wv);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn causal(
    x: &[i32],
    t: usize,
    cin: usize,
    cout: usize,
    k: usize,
    d: usize,
    w: &[i16],
    b: &[i32],
) -> Vec<i32> {
    let mut acc = Vec::with_capacity(t * cout);
    for step in 0..t {
        let mut o = b.to_vec();
        for j in 0..k {
            let Some(src) = step.checked_sub((k - 1 - j) * d) else {
                continue;
            };
            mac(
                &mut o,
                &x[src * cin..(src + 1) * cin],
                &w[j * cin * cout..(j + 1) * cin * cout],
                cout,
            );
        }
        acc.extend(o);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_sequence;
    use super::super::*;
    use crate::model::{build_tinyradarnn, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (crate::model::Network, QuantizedNetwork, ChaCha8Rng) {
        let cfg = ModelConfig::toy();
        let mut net = build_tinyradarnn(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in net.params_mut() {
            if p.shape().len() == 1 {
                p.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-0.1..0.1));
            }
        }
        let calib: Vec<_> = (0..16).map(|_| random_sequence(&cfg, &mut rng)).collect();
        let q = calibrate_and_quantize(&net, &calib).unwrap();
        (net, q, rng)
    }

    #[test]
    fn repeat_runs_are_bit_identical() {
        let (_, q, mut rng) = setup(1);
        let frames = random_sequence(&q.config, &mut rng);
        let a = quantized_forward_sequence(&q, &frames).unwrap();
        let b = quantized_forward_sequence(&q.clone(), &frames).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tracks_float_path() {
        let (net, q, mut rng) = setup(2);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let frames = random_sequence(&q.config, &mut rng);
            let f = net.forward_sequence(&frames).unwrap();
            let g = quantized_forward_sequence(&q, &frames).unwrap();
            for (a, b) in f.data().iter().zip(g.data()) {
                worst = worst.max((a - b).abs());
            }
        }
        let budget = error_budget(&q);
        assert!(worst <= budget, "max diff {worst} exceeds budget {budget}");
    }

    #[test]
    fn zero_input_matches_float_constant() {
        let (net, q, _) = setup(3);
        let cfg = &q.config;
        let frames = vec![FeatureFrame::zeros(cfg.tw, cfg.rp, cfg.sensors); cfg.time_steps];
        let f = net.forward_sequence(&frames).unwrap();
        let g = quantized_forward_sequence(&q, &frames).unwrap();
        let budget = error_budget(&q);
        for (a, b) in f.data().iter().zip(g.data()) {
            assert!((a - b).abs() <= budget, "{a} vs {b}, budget {budget}");
        }
    }

    /// Worst-case drift from the float path: each layer amplifies the incoming
    /// error by its induced infinity norm, then adds its weight rounding and one
    /// output step.
    fn error_budget(q: &QuantizedNetwork) -> f64 {
        let mut e = 0.0;
        for l in q.layers().filter(|l| l.op.has_weights()) {
            let cout = l.bias.len();
            let norm = (0..cout)
                .map(|co| {
                    l.weight
                        .iter()
                        .skip(co)
                        .step_by(cout)
                        .map(|&w| f64::from(w).abs())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
                * l.weight_params.scale;
            let gain = if matches!(l.op, QuantOp::Residual { .. }) {
                1.0 + norm
            } else {
                norm
            };
            let rounding =
                l.op.fan_in() as f64 * 255.0 * l.input.scale * l.weight_params.scale / 2.0;
            e = gain * e + rounding + l.output.map_or(0.0, |o| o.scale);
        }
        e
    }

    #[test]
    fn causal_like_float_path() {
        let (_, q, mut rng) = setup(4);
        let frames = random_sequence(&q.config, &mut rng);
        let base = quantized_forward_sequence(&q, &frames).unwrap();
        let mut changed = frames.clone();
        changed[3].data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        let out = quantized_forward_sequence(&q, &changed).unwrap();
        let k = q.config.classes;
        assert_eq!(&base.data()[..3 * k], &out.data()[..3 * k]);
        assert_ne!(&base.data()[3 * k..], &out.data()[3 * k..]);
    }

    #[test]
    fn wrong_frame_count() {
        let (_, q, mut rng) = setup(5);
        let frames = random_sequence(&q.config, &mut rng);
        assert!(quantized_forward_sequence(&q, &frames[..2]).is_err());
    }
}
