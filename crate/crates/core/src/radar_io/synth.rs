//! Point-target simulator and the closed-form Doppler bin oracle.

use std::f64::consts::PI;

use num_complex::Complex32;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SweepRecording, RANGE_STEP_M};
use crate::error::{Error, Result};

/// Free-space wavelength of a 60 GHz carrier.
pub const WAVELENGTH_60GHZ_M: f64 = 4.9965e-3;

/// One reflecting point moving at constant radial velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTargetSpec {
    pub initial_range_m: f64,
    /// Positive values move away from the sensor.
    pub velocity_mps: f64,
    pub amplitude: f64,
    /// Standard deviation of the Gaussian range envelope.
    pub envelope_sigma_m: f64,
    /// Standard deviation of the complex white noise (both components together).
    pub noise_std: f64,
    pub carrier_wavelength_m: f64,
    pub range_start_m: f64,
    pub range_step_m: f64,
    pub sensors: usize,
}

impl Default for SynthTargetSpec {
    fn default() -> Self {
        Self {
            initial_range_m: 0.15,
            velocity_mps: 0.0,
            amplitude: 1.0,
            envelope_sigma_m: 0.02,
            noise_std: 0.0,
            carrier_wavelength_m: WAVELENGTH_60GHZ_M,
            range_start_m: 0.07,
            range_step_m: RANGE_STEP_M,
            sensors: 1,
        }
    }
}

impl SynthTargetSpec {
    fn validate(&self) -> Result<()> {
        if !(self.envelope_sigma_m > 0.0) {
            return Err(Error::Validation("envelope sigma must be positive".into()));
        }
        if !(self.amplitude >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Validation(
                "amplitude and noise std must be non-negative".into(),
            ));
        }
        if !(self.carrier_wavelength_m > 0.0) || !(self.range_step_m > 0.0) {
            return Err(Error::Validation(
                "wavelength and range step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Simulates `n_sweeps` sweeps of a single moving reflector.
///
/// Sweep `t` carries `A * exp(-(x - r(t))^2 / (2 sigma^2)) * exp(i * 4 pi r(t) / lambda)`
/// over the range grid `x`, where `r(t) = r0 + v t / f_sweep`, plus complex white
/// noise. Output is deterministic in `seed`. A target that leaves the sampled
/// window only sets [`SweepRecording::target_left_window`].
pub fn synth_recording(
    spec: &SynthTargetSpec,
    n_sweeps: usize,
    rp: usize,
    sweep_freq_hz: f64,
    seed: u64,
) -> Result<SweepRecording> {
    spec.validate()?;
    if n_sweeps == 0 || rp == 0 {
        return Err(Error::Validation(
            "need at least one sweep and one range point".into(),
        ));
    }
    let freq_mhz = (sweep_freq_hz * 1000.0).round();
    if !(freq_mhz >= 1.0 && freq_mhz <= f64::from(u32::MAX)) {
        return Err(Error::Validation(format!(
            "sweep frequency {sweep_freq_hz} Hz out of range"
        )));
    }
    let freq_mhz = freq_mhz as u32;
    let fs = f64::from(freq_mhz) / 1000.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let component_std = spec.noise_std / 2f64.sqrt();
    let range_end = spec.range_start_m + (rp - 1) as f64 * spec.range_step_m;
    let two_sigma_sq = 2.0 * spec.envelope_sigma_m * spec.envelope_sigma_m;

    let mut left_window = false;
    let mut data = Vec::with_capacity(spec.sensors * n_sweeps * rp);
    for _sensor in 0..spec.sensors {
        for t in 0..n_sweeps {
            let range = spec.initial_range_m + spec.velocity_mps * t as f64 / fs;
            if range < spec.range_start_m || range > range_end {
                left_window = true;
            }
            let phase = 4.0 * PI * range / spec.carrier_wavelength_m;
            let (sin, cos) = phase.sin_cos();
            for r in 0..rp {
                let x = spec.range_start_m + r as f64 * spec.range_step_m;
                let env = spec.amplitude * (-(x - range) * (x - range) / two_sigma_sq).exp();
                let (mut re, mut im) = (env * cos, env * sin);
                if spec.noise_std > 0.0 {
                    let nr: f64 = StandardNormal.sample(&mut rng);
                    let ni: f64 = StandardNormal.sample(&mut rng);
                    re += component_std * nr;
                    im += component_std * ni;
                }
                data.push(Complex32::new(re as f32, im as f32));
            }
        }
    }
    let mut rec = SweepRecording::new(
        spec.sensors,
        n_sweeps,
        rp,
        data,
        freq_mhz,
        spec.range_start_m,
        spec.range_step_m,
        None,
        0,
        0,
    )?;
    rec.target_left_window = left_window;
    Ok(rec)
}

/// DFT bin at which a target of radial velocity `v` peaks in a `tw`-sweep frame.
///
/// Uses `f_d = 2 v / lambda` and bin spacing `f_sweep / tw`; negative
/// frequencies wrap to the upper half of `[0, tw)`.
pub fn predict_doppler_bin(
    velocity_mps: f64,
    sweep_freq_hz: f64,
    tw: usize,
    wavelength_m: f64,
) -> Result<usize> {
    if tw == 0 || !(sweep_freq_hz > 0.0) || !(wavelength_m > 0.0) {
        return Err(Error::Validation(
            "tw, sweep frequency and wavelength must be positive".into(),
        ));
    }
    let doppler_hz = 2.0 * velocity_mps / wavelength_m;
    let nyquist_hz = sweep_freq_hz / 2.0;
    if doppler_hz.abs() >= nyquist_hz {
        return Err(Error::Aliasing {
            doppler_hz,
            nyquist_hz,
        });
    }
    let bin = (doppler_hz / (sweep_freq_hz / tw as f64)).round() as i64;
    Ok(bin.rem_euclid(tw as i64) as usize)
}
