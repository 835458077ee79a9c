//! Post-training quantization, integer inference and static memory planning.
//!
//! Weights are 16-bit symmetric per layer, activations 8-bit asymmetric with
//! ranges calibrated on float runs, biases 32-bit at accumulator scale. ReLU
//! is fused into the preceding layer and max pooling runs directly on the
//! 8-bit codes (requantization is monotone, so pooling commutes with it).

mod forward;
mod io;
mod memory;

pub use forward::{quantize_frame, quantized_forward_sequence};
pub use io::{decode_quantized, encode_quantized, load_quantized, save_quantized};
pub use memory::{memory_plan, MemoryBlock, MemoryPlan};

use crate::error::{Error, Result};
use crate::features::FeatureFrame;
use crate::model::{ModelConfig, Network};
use crate::nn::{Layer, Sequential, Tensor};

/// Largest 16-bit weight code.
pub const WEIGHT_QMAX: i32 = i16::MAX as i32;
/// Largest magnitude of a zero-point-centred 8-bit activation.
const ACT_SPAN: i64 = 255;

/// Affine map between reals and integer codes: `real = scale * (q - zero_point)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub bit_width: u8,
    pub symmetric: bool,
}

impl QuantParams {
    /// Unsigned 8-bit params covering `[min, max]` (widened to include 0).
    pub fn activation(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || min > max {
            return Err(Error::Numeric(format!(
                "invalid activation range [{min}, {max}]"
            )));
        }
        let (lo, hi) = (min.min(0.0), max.max(0.0));
        let scale = if hi > lo { (hi - lo) / 255.0 } else { 1.0 };
        let zero_point = ((-lo / scale).round() as i32).clamp(0, 255);
        Ok(Self {
            scale,
            zero_point,
            bit_width: 8,
            symmetric: false,
        })
    }

    /// Symmetric params mapping `max_abs` onto `qmax`.
    pub fn symmetric(max_abs: f64, qmax: i32, bit_width: u8) -> Result<Self> {
        if !max_abs.is_finite() || qmax < 1 {
            return Err(Error::Numeric(format!(
                "cannot quantize max |w| = {max_abs} onto {qmax} levels"
            )));
        }
        let scale = if max_abs > 0.0 {
            max_abs / f64::from(qmax)
        } else {
            1.0
        };
        Ok(Self {
            scale,
            zero_point: 0,
            bit_width,
            symmetric: true,
        })
    }

    pub fn qmin(&self) -> i32 {
        if self.symmetric {
            -self.qmax()
        } else {
            0
        }
    }

    pub fn qmax(&self) -> i32 {
        if self.symmetric {
            (1 << (self.bit_width - 1)) - 1
        } else {
            (1 << self.bit_width) - 1
        }
    }

    pub fn quantize(&self, v: f64) -> i32 {
        ((v / self.scale).round() as i64 + i64::from(self.zero_point))
            .clamp(self.qmin().into(), self.qmax().into()) as i32
    }

    pub fn dequantize(&self, q: i32) -> f64 {
        f64::from(q - self.zero_point) * self.scale
    }
}

/// Symmetric quantization of `values` onto `[-qmax, qmax]`.
pub fn quantize_symmetric(values: &[f64], qmax: i32) -> Result<(Vec<i32>, QuantParams)> {
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let params = QuantParams::symmetric(max_abs, qmax, 16)?;
    let q = values
        .iter()
        .map(|&v| ((v / params.scale).round() as i32).clamp(-qmax, qmax))
        .collect();
    Ok((q, params))
}

pub fn dequantize(q: &[i32], params: &QuantParams) -> Vec<f64> {
    q.iter().map(|&v| params.dequantize(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantOp {
    Conv2d {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
    },
    CausalConv1d {
        k: usize,
        cin: usize,
        cout: usize,
        dilation: usize,
    },
    /// `x + relu(causal_conv(x))`, kernel `k x filters x filters`.
    Residual {
        k: usize,
        filters: usize,
        dilation: usize,
    },
    Dense {
        n: usize,
        m: usize,
    },
    MaxPool2d {
        kh: usize,
        kw: usize,
    },
    Flatten,
}

impl QuantOp {
    /// Number of inputs feeding one accumulator.
    pub fn fan_in(&self) -> usize {
        match *self {
            QuantOp::Conv2d { kh, kw, cin, .. } => kh * kw * cin,
            QuantOp::CausalConv1d { k, cin, .. } => k * cin,
            QuantOp::Residual { k, filters, .. } => k * filters,
            QuantOp::Dense { n, .. } => n,
            QuantOp::MaxPool2d { .. } | QuantOp::Flatten => 0,
        }
    }

    pub fn has_weights(&self) -> bool {
        self.fan_in() > 0
    }
}

/// One quantized layer; an activation-only layer has empty weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantLayer {
    pub op: QuantOp,
    pub weight: Vec<i16>,
    pub weight_params: QuantParams,
    pub bias: Vec<i32>,
    /// ReLU folded into the requantization.
    pub relu: bool,
    pub input: QuantParams,
    /// `None` only for the final layer, which emits dequantized logits.
    pub output: Option<QuantParams>,
}

impl QuantLayer {
    /// Accumulator-to-output rescale factor.
    pub fn multiplier(&self) -> f64 {
        let acc = self.input.scale * self.weight_params.scale;
        self.output.map_or(acc, |o| acc / o.scale)
    }

    /// Rescale factor of the identity path of a residual block.
    pub fn skip_multiplier(&self) -> f64 {
        self.output
            .map_or(self.input.scale, |o| self.input.scale / o.scale)
    }

    /// Worst-case accumulator magnitude over all 8-bit inputs.
    pub fn worst_case_accumulator(&self) -> i64 {
        let w_max = self
            .weight
            .iter()
            .map(|w| i64::from(w.unsigned_abs()))
            .max()
            .unwrap_or(0);
        let b_max = self
            .bias
            .iter()
            .map(|b| i64::from(b.unsigned_abs()))
            .max()
            .unwrap_or(0);
        self.op.fan_in() as i64 * ACT_SPAN * w_max + b_max
    }

    fn check_headroom(&self, name: &str) -> Result<()> {
        let worst = self.worst_case_accumulator();
        if worst > i64::from(i32::MAX) {
            return Err(Error::Overflow(format!(
                "{name}: worst-case accumulator {worst} exceeds the 32-bit range (fan-in {})",
                self.op.fan_in()
            )));
        }
        Ok(())
    }
}

/// Integer-only counterpart of [`Network`]; immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNetwork {
    pub config: ModelConfig,
    pub input: QuantParams,
    pub cnn: Vec<QuantLayer>,
    pub tcn: Vec<QuantLayer>,
}

impl QuantizedNetwork {
    /// Verifies every accumulator fits 32 bits for any 8-bit input.
    pub fn check_headroom(&self) -> Result<()> {
        for (part, layers) in [("cnn", &self.cnn), ("tcn", &self.tcn)] {
            for (i, l) in layers.iter().enumerate() {
                l.check_headroom(&format!("{part}[{i}]"))?;
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> impl Iterator<Item = &QuantLayer> {
        self.cnn.iter().chain(&self.tcn)
    }
}

/// Weight + bias storage in bytes: 16-bit weights, 32-bit biases.
pub fn model_size_bytes(qnet: &QuantizedNetwork) -> usize {
    qnet.layers()
        .map(|l| 2 * l.weight.len() + 4 * l.bias.len())
        .sum()
}

/// Running min/max of every activation point.
#[derive(Debug, Clone)]
struct Ranges(Vec<(f64, f64)>);

impl Ranges {
    fn new(n: usize) -> Self {
        Self(vec![(f64::INFINITY, f64::NEG_INFINITY); n])
    }

    fn observe(&mut self, i: usize, t: &Tensor) {
        let r = &mut self.0[i];
        for &v in t.data() {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
}

/// Quantizes `net` using activation ranges observed on the calibration sequences.
pub fn calibrate_and_quantize(
    net: &Network,
    calibration: &[Vec<FeatureFrame>],
) -> Result<QuantizedNetwork> {
    if calibration.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyResult("calibration set has no frames".into()));
    }
    let mut input = Ranges::new(1);
    let mut cnn = Ranges::new(net.cnn.layers.len());
    let mut tcn = Ranges::new(net.tcn.layers.len());
    for seq in calibration {
        let mut features = Vec::new();
        for frame in seq {
            let x = Tensor::new(&net.frame_shape(), frame.data().to_vec())?;
            input.observe(0, &x);
            let trace = net.cnn.trace(&x)?;
            trace
                .iter()
                .enumerate()
                .for_each(|(i, t)| cnn.observe(i, t));
            features.extend_from_slice(trace.last().map_or(x.data(), |t| t.data()));
        }
        if seq.len() == net.config.time_steps {
            let width = features.len() / seq.len();
            let trace = net
                .tcn
                .trace(&Tensor::new(&[seq.len(), width], features)?)?;
            trace
                .iter()
                .enumerate()
                .for_each(|(i, t)| tcn.observe(i, t));
        } else if !seq.is_empty() {
            return Err(Error::Validation(format!(
                "calibration sequence has {} frames, expected {}",
                seq.len(),
                net.config.time_steps
            )));
        }
    }
    if tcn.0.iter().any(|r| r.0 > r.1) {
        return Err(Error::EmptyResult(
            "calibration set has no complete sequence".into(),
        ));
    }
    let (lo, hi) = input.0[0];
    let input = QuantParams::activation(lo, hi)?;
    let (cnn, after_cnn) = quantize_sequential(&net.cnn, &cnn, input, false, "cnn")?;
    let (tcn, _) = quantize_sequential(&net.tcn, &tcn, after_cnn, true, "tcn")?;
    let qnet = QuantizedNetwork {
        config: net.config.clone(),
        input,
        cnn,
        tcn,
    };
    qnet.check_headroom()?;
    Ok(qnet)
}

fn quantize_sequential(
    seq: &Sequential,
    ranges: &Ranges,
    mut act: QuantParams,
    dequantize_last: bool,
    part: &str,
) -> Result<(Vec<QuantLayer>, QuantParams)> {
    let layers = &seq.layers;
    let mut out = Vec::new();
    let mut i = 0;
    while i < layers.len() {
        let relu = matches!(layers.get(i + 1), Some(Layer::Relu));
        let point = if relu { i + 1 } else { i };
        let last = point + 1 == layers.len();
        let (weight, bias, op) = match &layers[i] {
            Layer::Conv2d(c) => {
                let [kh, kw, cin, cout] = *c.weight.shape() else {
                    unreachable!()
                };
                (&c.weight, &c.bias, QuantOp::Conv2d { kh, kw, cin, cout })
            }
            Layer::CausalConv1d(c) => {
                let [k, cin, cout] = *c.weight.shape() else {
                    unreachable!()
                };
                (
                    &c.weight,
                    &c.bias,
                    QuantOp::CausalConv1d {
                        k,
                        cin,
                        cout,
                        dilation: c.dilation,
                    },
                )
            }
            Layer::Residual(r) => {
                let [k, filters, _] = *r.conv.weight.shape() else {
                    unreachable!()
                };
                (
                    &r.conv.weight,
                    &r.conv.bias,
                    QuantOp::Residual {
                        k,
                        filters,
                        dilation: r.conv.dilation,
                    },
                )
            }
            Layer::Dense(d) => {
                let [n, m] = *d.weight.shape() else {
                    unreachable!()
                };
                (&d.weight, &d.bias, QuantOp::Dense { n, m })
            }
            Layer::MaxPool2d(p) => {
                out.push(passthrough(QuantOp::MaxPool2d { kh: p.kh, kw: p.kw }, act));
                i += 1;
                continue;
            }
            Layer::Flatten => {
                out.push(passthrough(QuantOp::Flatten, act));
                i += 1;
                continue;
            }
            Layer::Relu => {
                return Err(Error::Unsupported(format!(
                    "{part}[{i}]: ReLU must follow a weighted layer to be fused"
                )));
            }
        };
        let output = if last && dequantize_last {
            None
        } else {
            let (lo, hi) = ranges.0[point];
            Some(QuantParams::activation(lo, hi)?)
        };
        let layer =
            quantize_weighted(op, weight, bias, relu, act, output, &format!("{part}[{i}]"))?;
        if let Some(o) = output {
            act = o;
        }
        out.push(layer);
        i = point + 1;
    }
    Ok((out, act))
}

fn passthrough(op: QuantOp, act: QuantParams) -> QuantLayer {
    QuantLayer {
        op,
        weight: Vec::new(),
        weight_params: QuantParams {
            scale: 1.0,
            zero_point: 0,
            bit_width: 16,
            symmetric: true,
        },
        bias: Vec::new(),
        relu: false,
        input: act,
        output: Some(act),
    }
}

/// Picks the widest weight range whose worst-case accumulator still fits 32 bits.
fn quantize_weighted(
    op: QuantOp,
    weight: &Tensor,
    bias: &Tensor,
    relu: bool,
    input: QuantParams,
    output: Option<QuantParams>,
    name: &str,
) -> Result<QuantLayer> {
    let fan_in = op.fan_in() as i64;
    let mut qmax = WEIGHT_QMAX.min((i64::from(i32::MAX) / (fan_in * ACT_SPAN)) as i32);
    loop {
        let (q, weight_params) = quantize_symmetric(weight.data(), qmax)?;
        let acc_scale = input.scale * weight_params.scale;
        let bias_q = bias
            .data()
            .iter()
            .map(|&b| (b / acc_scale).round())
            .collect::<Vec<_>>();
        if bias_q.iter().any(|b| b.abs() > f64::from(i32::MAX)) {
            return Err(Error::Overflow(format!(
                "{name}: bias does not fit the 32-bit accumulator scale"
            )));
        }
        let layer = QuantLayer {
            op,
            weight: q.iter().map(|&v| v as i16).collect(),
            weight_params,
            bias: bias_q.iter().map(|&b| b as i32).collect(),
            relu,
            input,
            output,
        };
        if layer.worst_case_accumulator() <= i64::from(i32::MAX) {
            return Ok(layer);
        }
        if qmax <= 1 {
            return layer.check_headroom(name).map(|_| layer);
        }
        qmax = qmax * 15 / 16;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::model::build_tinyradarnn;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_sequence(cfg: &ModelConfig, rng: &mut impl Rng) -> Vec<FeatureFrame> {
        (0..cfg.time_steps)
            .map(|_| {
                let data = (0..cfg.tw * cfg.rp * cfg.sensors)
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect();
                FeatureFrame::new(cfg.tw, cfg.rp, cfg.sensors, data, FeatureKind::Rfdm).unwrap()
            })
            .collect()
    }

    fn toy_quantized(seed: u64) -> (Network, QuantizedNetwork) {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let calib: Vec<_> = (0..8).map(|_| random_sequence(&cfg, &mut rng)).collect();
        let q = calibrate_and_quantize(&net, &calib).unwrap();
        (net, q)
    }

    #[test]
    fn unit_weights_are_exact() {
        let w = [1.0, -1.0, 0.0, 1.0, 0.0, -1.0];
        let (q, p) = quantize_symmetric(&w, WEIGHT_QMAX).unwrap();
        assert_eq!(dequantize(&q, &p), w);
    }

    #[test]
    fn activation_params() {
        let p = QuantParams::activation(0.0, 2.55).unwrap();
        assert_eq!(p.zero_point, 0);
        assert!((p.scale - 0.01).abs() < 1e-15);
        let p = QuantParams::activation(-1.0, 1.0).unwrap();
        assert_eq!(p.zero_point, 128);
        assert_eq!(p.dequantize(p.quantize(0.0)), 0.0);
        // all-positive ranges still represent zero
        let p = QuantParams::activation(0.5, 1.0).unwrap();
        assert_eq!(p.quantize(0.0), 0);
        assert!(QuantParams::activation(1.0, 0.0).is_err());
    }

    #[test]
    fn empty_calibration_rejected() {
        let net = build_tinyradarnn(&ModelConfig::toy(), 0).unwrap();
        assert!(matches!(
            calibrate_and_quantize(&net, &[]),
            Err(Error::EmptyResult(_))
        ));
        assert!(matches!(
            calibrate_and_quantize(&net, &[vec![]]),
            Err(Error::EmptyResult(_))
        ));
    }

    #[test]
    fn layer_structure_fuses_relu() {
        let (net, q) = toy_quantized(1);
        // conv+relu, pool three times, then flatten
        assert_eq!(q.cnn.len(), 7);
        assert!(q.cnn.iter().step_by(2).take(3).all(|l| l.relu));
        // pointwise, three residuals, dense+relu x2, dense
        assert_eq!(q.tcn.len(), 1 + net.config.dilations.len() + 3);
        assert!(q.tcn.last().unwrap().output.is_none());
        assert!(q.tcn[..q.tcn.len() - 1].iter().all(|l| l.output.is_some()));
    }

    #[test]
    fn headroom_limits_wide_fan_in() {
        let net = build_tinyradarnn(&ModelConfig::eleven_gesture(), 0).unwrap();
        let cfg = &net.config;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = calibrate_and_quantize(&net, &[random_sequence(cfg, &mut rng)]).unwrap();
        q.check_headroom().unwrap();
        let pointwise = &q.tcn[0];
        assert_eq!(pointwise.op.fan_in(), 384);
        let qmax = pointwise
            .weight
            .iter()
            .map(|w| w.unsigned_abs())
            .max()
            .unwrap();
        assert!(i64::from(qmax) * 384 * 255 <= i64::from(i32::MAX));
        assert!(qmax < i16::MAX as u16);
        // the CNN layers keep the full 16-bit range
        for l in q.cnn.iter().filter(|l| l.op.has_weights()) {
            assert_eq!(
                l.weight.iter().map(|w| w.unsigned_abs()).max().unwrap(),
                i16::MAX as u16
            );
        }
    }

    #[test]
    fn overflow_detected() {
        let (_, mut q) = toy_quantized(2);
        q.tcn[1].bias[0] = i32::MAX;
        assert!(matches!(q.check_headroom(), Err(Error::Overflow(_))));
    }

    #[test]
    fn eleven_gesture_model_size() {
        let net = build_tinyradarnn(&ModelConfig::eleven_gesture(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = calibrate_and_quantize(&net, &[random_sequence(&net.config, &mut rng)]).unwrap();
        let biases: usize = q.layers().map(|l| l.bias.len()).sum();
        assert_eq!(biases, 347);
        assert_eq!(model_size_bytes(&q), 2 * (45_723 - 347) + 4 * 347);
    }

    #[test]
    fn empty_network_size() {
        let (_, mut q) = toy_quantized(0);
        q.cnn.clear();
        q.tcn.clear();
        assert_eq!(model_size_bytes(&q), 0);
    }

    proptest! {
        #[test]
        fn roundtrip_within_half_step(w in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let (q, p) = quantize_symmetric(&w, WEIGHT_QMAX).unwrap();
            for (a, b) in w.iter().zip(dequantize(&q, &p)) {
                prop_assert!((a - b).abs() <= p.scale / 2.0 + 1e-12);
            }
        }

        #[test]
        fn quantize_dequantize_idempotent(w in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let (q1, p1) = quantize_symmetric(&w, WEIGHT_QMAX).unwrap();
            let d1 = dequantize(&q1, &p1);
            let (q2, p2) = quantize_symmetric(&d1, WEIGHT_QMAX).unwrap();
            prop_assert_eq!(&q2, &q1);
            let d2 = dequantize(&q2, &p2);
            for (a, b) in d1.iter().zip(&d2) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn activation_roundtrip(lo in -5.0f64..0.0, hi in 0.0f64..5.0, t in 0.0f64..1.0) {
            let p = QuantParams::activation(lo, hi).unwrap();
            let v = lo + t * (hi - lo);
            // the zero point is rounded, so the grid may sit up to half a step off the range ends
            prop_assert!((p.dequantize(p.quantize(v)) - v).abs() <= p.scale * (1.0 + 1e-9));
        }
    }
}
