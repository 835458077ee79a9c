//! Range-frequency Doppler maps and hand-crafted auxiliary features.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::radar_io::RawFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Rfdm,
    RawIq,
    SignalVariation2d,
}

/// Real-valued feature window laid out time × range × channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    tw: usize,
    range_points: usize,
    channels: usize,
    data: Vec<f64>,
    pub kind: FeatureKind,
}

impl FeatureFrame {
    pub fn new(
        tw: usize,
        range_points: usize,
        channels: usize,
        data: Vec<f64>,
        kind: FeatureKind,
    ) -> Result<Self> {
        if data.len() != tw * range_points * channels {
            return Err(Error::Validation(format!(
                "feature data has {} values, {tw}x{range_points}x{channels} needs {}",
                data.len(),
                tw * range_points * channels
            )));
        }
        Ok(Self {
            tw,
            range_points,
            channels,
            data,
            kind,
        })
    }

    pub fn zeros(tw: usize, range_points: usize, channels: usize) -> Self {
        Self {
            tw,
            range_points,
            channels,
            data: vec![0.0; tw * range_points * channels],
            kind: FeatureKind::Rfdm,
        }
    }

    pub fn tw(&self) -> usize {
        self.tw
    }

    pub fn range_points(&self) -> usize {
        self.range_points
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.tw, self.range_points, self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, t: usize, r: usize, c: usize) -> f64 {
        self.data[(t * self.range_points + r) * self.channels + c]
    }
}

fn check_finite(frame: &RawFrame) -> Result<()> {
    for t in 0..frame.tw() {
        for r in 0..frame.range_points() {
            for c in 0..frame.sensors() {
                let v = frame.at(t, r, c);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Numeric(format!(
                        "frame sample (t={t}, r={r}, sensor={c})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Magnitude of the DFT over the time axis, per range bin and sensor.
///
/// Output cell `(f, r, c)` is `|sum_t S(t, r, c) exp(-2 pi i f t / TW)|`.
pub fn compute_rfdm(frame: &RawFrame) -> Result<FeatureFrame> {
    check_finite(frame)?;
    let (tw, rp, sensors) = (frame.tw(), frame.range_points(), frame.sensors());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(tw);
    let mut column = vec![Complex64::new(0.0, 0.0); tw];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = vec![0.0; tw * rp * sensors];
    for r in 0..rp {
        for c in 0..sensors {
            for (t, v) in column.iter_mut().enumerate() {
                *v = frame.at(t, r, c);
            }
            fft.process_with_scratch(&mut column, &mut scratch);
            for (f, v) in column.iter().enumerate() {
                data[(f * rp + r) * sensors + c] = v.norm();
            }
        }
    }
    FeatureFrame::new(tw, rp, sensors, data, FeatureKind::Rfdm)
}

/// Divides each channel by its maximum absolute value. All-zero channels pass through.
pub fn normalize_frame(frame: &FeatureFrame) -> FeatureFrame {
    let mut out = frame.clone();
    let ch = frame.channels;
    for c in 0..ch {
        let max = frame
            .data
            .iter()
            .skip(c)
            .step_by(ch)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 {
            for v in out.data.iter_mut().skip(c).step_by(ch) {
                *v /= max;
            }
        }
    }
    out
}

/// Real and imaginary planes of every sensor: `TW x RP x 2C`.
pub fn raw_iq(frame: &RawFrame) -> FeatureFrame {
    let (tw, rp, sensors) = (frame.tw(), frame.range_points(), frame.sensors());
    let data = frame.data().iter().flat_map(|v| [v.re, v.im]).collect();
    FeatureFrame {
        tw,
        range_points: rp,
        channels: 2 * sensors,
        data,
        kind: FeatureKind::RawIq,
    }
}

/// First difference along time, `(TW-1) x RP x 2C` with real and imaginary planes per sensor.
pub fn signal_variation_2d(frame: &RawFrame) -> Result<FeatureFrame> {
    let (tw, rp, sensors) = (frame.tw(), frame.range_points(), frame.sensors());
    if tw < 2 {
        return Err(Error::Validation(
            "signal variation needs at least two sweeps".into(),
        ));
    }
    let mut data = Vec::with_capacity((tw - 1) * rp * 2 * sensors);
    for t in 0..tw - 1 {
        for r in 0..rp {
            for c in 0..sensors {
                let d = frame.at(t + 1, r, c) - frame.at(t, r, c);
                data.push(d.re);
                data.push(d.im);
            }
        }
    }
    FeatureFrame::new(
        tw - 1,
        rp,
        2 * sensors,
        data,
        FeatureKind::SignalVariation2d,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    EnergySoR,
    EnergySoT,
    VariationSoR,
    VariationSoT,
    CentreOfMass,
}

impl AuxKind {
    pub const ALL: [AuxKind; 5] = [
        Self::EnergySoR,
        Self::EnergySoT,
        Self::VariationSoR,
        Self::VariationSoT,
        Self::CentreOfMass,
    ];

    /// Vector length for a `tw x rp` frame.
    pub fn len(self, tw: usize, rp: usize) -> usize {
        match self {
            Self::EnergySoR | Self::VariationSoR => rp,
            Self::EnergySoT | Self::VariationSoT => tw,
            Self::CentreOfMass => 3 * tw,
        }
    }
}

impl fmt::Display for AuxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EnergySoR => "energy-sor",
            Self::EnergySoT => "energy-sot",
            Self::VariationSoR => "variation-sor",
            Self::VariationSoT => "variation-sot",
            Self::CentreOfMass => "centre-of-mass",
        })
    }
}

impl FromStr for AuxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Validation(format!("unknown auxiliary feature kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxFeatureVector {
    pub kind: AuxKind,
    pub values: Vec<f64>,
}

impl AuxFeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reductions of a raw frame over range (SoR) or time (SoT).
///
/// Multi-sensor frames are reduced per sensor and the results summed. The
/// centre of mass emits, per sweep, the magnitude-weighted mean range index,
/// the total magnitude and the weighted range variance. `VariationSoT` has
/// only `TW-1` differences; its last slot is zero.
pub fn aux_feature(frame: &RawFrame, kind: AuxKind) -> Result<AuxFeatureVector> {
    let (tw, rp, sensors) = (frame.tw(), frame.range_points(), frame.sensors());
    if tw < 2 && matches!(kind, AuxKind::VariationSoR | AuxKind::VariationSoT) {
        return Err(Error::Validation(
            "variation features need at least two sweeps".into(),
        ));
    }
    let mut values = vec![0.0; kind.len(tw, rp)];
    match kind {
        AuxKind::EnergySoR | AuxKind::EnergySoT => {
            for t in 0..tw {
                for r in 0..rp {
                    let e: f64 = (0..sensors).map(|c| frame.at(t, r, c).norm_sqr()).sum();
                    values[if kind == AuxKind::EnergySoR { r } else { t }] += e;
                }
            }
        }
        AuxKind::VariationSoR | AuxKind::VariationSoT => {
            for t in 0..tw - 1 {
                for r in 0..rp {
                    let d: f64 = (0..sensors)
                        .map(|c| (frame.at(t + 1, r, c) - frame.at(t, r, c)).norm())
                        .sum();
                    values[if kind == AuxKind::VariationSoR { r } else { t }] += d;
                }
            }
        }
        AuxKind::CentreOfMass => {
            for t in 0..tw {
                let weights: Vec<f64> = (0..rp)
                    .map(|r| (0..sensors).map(|c| frame.at(t, r, c).norm()).sum())
                    .collect();
                let total: f64 = weights.iter().sum();
                if total > 0.0 {
                    let mean = weights
                        .iter()
                        .enumerate()
                        .map(|(r, w)| r as f64 * w)
                        .sum::<f64>()
                        / total;
                    let var = weights
                        .iter()
                        .enumerate()
                        .map(|(r, w)| (r as f64 - mean).powi(2) * w)
                        .sum::<f64>()
                        / total;
                    values[3 * t..3 * t + 3].copy_from_slice(&[mean, total, var]);
                }
            }
        }
    }
    Ok(AuxFeatureVector { kind, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar_io::{
        predict_doppler_bin, synth_recording, SynthTargetSpec, WAVELENGTH_60GHZ_M,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(tw: usize, rp: usize, c: usize, seed: u64) -> RawFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RawFrame::from_fn(tw, rp, c, |_, _, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    fn dft_oracle(frame: &RawFrame, f: usize, r: usize, c: usize) -> f64 {
        let tw = frame.tw();
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..tw {
            let ang = -2.0 * std::f64::consts::PI * (f * t) as f64 / tw as f64;
            acc += frame.at(t, r, c) * Complex64::from_polar(1.0, ang);
        }
        acc.norm()
    }

    #[test]
    fn dc_column() {
        let c = Complex64::new(0.3, -0.4);
        let frame = RawFrame::from_fn(16, 3, 1, |_, _, _| c).unwrap();
        let rfdm = compute_rfdm(&frame).unwrap();
        for r in 0..3 {
            assert!((rfdm.at(0, r, 0) - 16.0 * 0.5).abs() < 1e-12);
            for f in 1..16 {
                assert!(rfdm.at(f, r, 0) < 1e-12);
            }
        }
    }

    #[test]
    fn matches_direct_dft() {
        let frame = random_frame(8, 4, 1, 11);
        let rfdm = compute_rfdm(&frame).unwrap();
        for f in 0..8 {
            for r in 0..4 {
                let want = dft_oracle(&frame, f, r, 0);
                assert!((rfdm.at(f, r, 0) - want).abs() <= 1e-10 * want.max(1e-300));
            }
        }
    }

    #[test]
    fn noiseless_target_peaks_at_predicted_bin() {
        let spec = SynthTargetSpec {
            velocity_mps: 0.1,
            envelope_sigma_m: 0.03,
            ..Default::default()
        };
        let rec = synth_recording(&spec, 32, 300, 160.0, 0).unwrap();
        let frame = &crate::radar_io::frame_stream(&rec, 32, 32).unwrap()[0];
        let rfdm = compute_rfdm(frame).unwrap();
        let want = predict_doppler_bin(0.1, 160.0, 32, WAVELENGTH_60GHZ_M).unwrap();
        assert_eq!(want, 8);
        // range bin holding the most energy
        let peak_r = (0..300)
            .max_by(|&a, &b| {
                let ea: f64 = (0..32).map(|f| rfdm.at(f, a, 0)).sum();
                let eb: f64 = (0..32).map(|f| rfdm.at(f, b, 0)).sum();
                ea.total_cmp(&eb)
            })
            .unwrap();
        let argmax = (0..32)
            .max_by(|&a, &b| rfdm.at(a, peak_r, 0).total_cmp(&rfdm.at(b, peak_r, 0)))
            .unwrap();
        assert_eq!(argmax, want);
    }

    #[test]
    fn non_finite_input_names_index() {
        let frame = RawFrame::from_fn(4, 3, 1, |t, r, _| {
            if t == 2 && r == 1 {
                Complex64::new(f64::NAN, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .unwrap();
        match compute_rfdm(&frame) {
            Err(Error::Numeric(msg)) => {
                assert!(msg.contains("t=2") && msg.contains("r=1"), "{msg}")
            }
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn parseval_and_phase_invariance() {
        let frame = random_frame(32, 6, 2, 5);
        let rfdm = compute_rfdm(&frame).unwrap();
        for r in 0..6 {
            for c in 0..2 {
                let freq: f64 = (0..32).map(|f| rfdm.at(f, r, c).powi(2)).sum();
                let time: f64 = (0..32).map(|t| frame.at(t, r, c).norm_sqr()).sum();
                assert!((freq - 32.0 * time).abs() / (32.0 * time) < 1e-9);
            }
        }
        let rot = Complex64::from_polar(1.0, 0.77);
        let rotated = RawFrame::from_fn(32, 6, 2, |t, r, c| frame.at(t, r, c) * rot).unwrap();
        let rfdm2 = compute_rfdm(&rotated).unwrap();
        for (a, b) in rfdm.data().iter().zip(rfdm2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization() {
        let zeros = FeatureFrame::zeros(4, 4, 2);
        assert_eq!(normalize_frame(&zeros), zeros);

        let data: Vec<f64> = (0..8)
            .map(|i| if i % 2 == 0 { i as f64 * 0.5 } else { 2.0 })
            .collect();
        let frame = FeatureFrame::new(2, 2, 2, data.clone(), FeatureKind::Rfdm).unwrap();
        let n = normalize_frame(&frame);
        // channel 0 max is 3.0, channel 1 is constant 2.0
        for i in 0..8 {
            let want = if i % 2 == 0 { data[i] / 3.0 } else { 1.0 };
            assert_eq!(n.data()[i], want);
        }
        assert_eq!(normalize_frame(&n), n);

        let frame = FeatureFrame::new(1, 3, 1, vec![1.0, 4.0, 2.0], FeatureKind::Rfdm).unwrap();
        assert_eq!(normalize_frame(&frame).data(), &[0.25, 1.0, 0.5]);
    }

    #[test]
    fn aux_lengths_match_feature_table() {
        let zero =
            |tw, rp, c| RawFrame::from_fn(tw, rp, c, |_, _, _| Complex64::new(0.0, 0.0)).unwrap();
        let eleven = zero(32, 492, 2);
        let five = zero(32, 414, 1);
        assert_eq!(aux_feature(&eleven, AuxKind::EnergySoR).unwrap().len(), 492);
        assert_eq!(aux_feature(&five, AuxKind::EnergySoR).unwrap().len(), 414);
        assert_eq!(aux_feature(&five, AuxKind::EnergySoT).unwrap().len(), 32);
        assert_eq!(
            aux_feature(&five, AuxKind::VariationSoR).unwrap().len(),
            414
        );
        assert_eq!(aux_feature(&five, AuxKind::VariationSoT).unwrap().len(), 32);
        assert_eq!(
            aux_feature(&eleven, AuxKind::CentreOfMass).unwrap().len(),
            96
        );
        for kind in AuxKind::ALL {
            assert!(aux_feature(&five, kind)
                .unwrap()
                .values
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn aux_values_by_hand() {
        // one sensor, 3 sweeps, 2 range bins; magnitude at (t, r) = t + r
        let frame =
            RawFrame::from_fn(3, 2, 1, |t, r, _| Complex64::new((t + r) as f64, 0.0)).unwrap();
        assert_eq!(
            aux_feature(&frame, AuxKind::EnergySoR).unwrap().values,
            vec![5.0, 14.0]
        );
        assert_eq!(
            aux_feature(&frame, AuxKind::EnergySoT).unwrap().values,
            vec![1.0, 5.0, 13.0]
        );
        assert_eq!(
            aux_feature(&frame, AuxKind::VariationSoR).unwrap().values,
            vec![2.0, 2.0]
        );
        assert_eq!(
            aux_feature(&frame, AuxKind::VariationSoT).unwrap().values,
            vec![2.0, 2.0, 0.0]
        );
        let com = aux_feature(&frame, AuxKind::CentreOfMass).unwrap().values;
        // t = 1: weights (1, 2) -> mean 2/3, total 3, var (4/9 + 2/9) / 3 = 2/9
        assert!((com[3] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(com[4], 3.0);
        assert!((com[5] - 2.0 / 9.0).abs() < 1e-15);
        // t = 0: only r = 1 is lit
        assert_eq!(&com[..3], &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn unknown_aux_kind() {
        assert!(matches!(
            "energy".parse::<AuxKind>(),
            Err(Error::Validation(_))
        ));
        assert_eq!(
            "centre-of-mass".parse::<AuxKind>().unwrap(),
            AuxKind::CentreOfMass
        );
    }

    #[test]
    fn variation_2d() {
        let constant = RawFrame::from_fn(32, 414, 1, |_, _, _| Complex64::new(1.0, 2.0)).unwrap();
        let v = signal_variation_2d(&constant).unwrap();
        assert_eq!(v.shape(), [31, 414, 2]);
        assert_eq!(v.data().len(), 25_668);
        assert!(v.data().iter().all(|&x| x == 0.0));

        let ramp = RawFrame::from_fn(5, 2, 1, |t, r, _| {
            Complex64::new(2.0 * t as f64 + r as f64, -(t as f64))
        })
        .unwrap();
        let v = signal_variation_2d(&ramp).unwrap();
        for t in 0..4 {
            for r in 0..2 {
                assert_eq!((v.at(t, r, 0), v.at(t, r, 1)), (2.0, -1.0));
            }
        }
        let short = RawFrame::from_fn(1, 2, 1, |_, _, _| Complex64::new(0.0, 0.0)).unwrap();
        assert!(signal_variation_2d(&short).is_err());
    }

    #[test]
    fn feature_table_sizes() {
        let zero =
            |tw, rp, c| RawFrame::from_fn(tw, rp, c, |_, _, _| Complex64::new(0.0, 0.0)).unwrap();
        for (rp, c, raw, rfdm, var) in [
            (414, 1, 26_496, 13_248, 25_668),
            (492, 2, 62_976, 31_488, 61_008),
        ] {
            let f = zero(32, rp, c);
            assert_eq!(raw_iq(&f).data().len(), raw);
            assert_eq!(compute_rfdm(&f).unwrap().data().len(), rfdm);
            assert_eq!(signal_variation_2d(&f).unwrap().data().len(), var);
        }
    }
}
