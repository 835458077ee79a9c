//! Labeled synthetic gesture corpus built from point-target trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{synth_recording, SweepRecording, SynthTargetSpec, WAVELENGTH_60GHZ_M};
use crate::error::{Error, Result};

/// A gesture class defined by the nominal trajectory of the hand.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureClass {
    pub name: String,
    pub velocity_mps: f64,
    pub initial_range_m: f64,
}

impl GestureClass {
    pub fn new(name: &str, velocity_mps: f64, initial_range_m: f64) -> Self {
        Self {
            name: name.to_string(),
            velocity_mps,
            initial_range_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub classes: Vec<GestureClass>,
    pub per_class: usize,
    pub sweeps: usize,
    pub range_points: usize,
    pub sensors: usize,
    pub sweep_freq_hz: f64,
    pub range_start_m: f64,
    pub range_step_m: f64,
    pub envelope_sigma_m: f64,
    pub velocity_jitter_mps: f64,
    pub range_jitter_m: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub noise_std: f64,
    pub users: u32,
    pub sessions: u32,
    pub seed: u64,
}

impl Default for CorpusConfig {
    /// Five trajectories, 200 one-second recordings each at 160 Hz over a
    /// 7-32 cm window sampled at 64 range points.
    fn default() -> Self {
        Self {
            classes: vec![
                GestureClass::new("push-fast", -0.15, 0.25),
                GestureClass::new("push-slow", -0.06, 0.20),
                GestureClass::new("hold", 0.0, 0.15),
                GestureClass::new("pull-slow", 0.06, 0.12),
                GestureClass::new("pull-fast", 0.15, 0.09),
            ],
            per_class: 200,
            sweeps: 160,
            range_points: 64,
            sensors: 1,
            sweep_freq_hz: 160.0,
            range_start_m: 0.07,
            range_step_m: 0.004,
            envelope_sigma_m: 0.015,
            velocity_jitter_mps: 0.01,
            range_jitter_m: 0.01,
            amplitude_min: 0.5,
            amplitude_max: 1.5,
            noise_std: 0.05,
            users: 10,
            sessions: 5,
            seed: 0,
        }
    }
}

/// Generates `per_class` labeled recordings for every class, class-major.
///
/// Velocity, start range and amplitude are jittered per recording. Users and
/// sessions are assigned round-robin so leave-one-user-out splits are balanced.
pub fn synth_corpus(cfg: &CorpusConfig) -> Result<Vec<SweepRecording>> {
    if cfg.classes.is_empty() || cfg.per_class == 0 {
        return Err(Error::Validation(
            "corpus needs at least one class and one recording per class".into(),
        ));
    }
    if cfg.users == 0 || cfg.sessions == 0 || cfg.amplitude_min > cfg.amplitude_max {
        return Err(Error::Validation(
            "invalid user/session counts or amplitude range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.classes.len() * cfg.per_class);
    for (label, class) in cfg.classes.iter().enumerate() {
        for i in 0..cfg.per_class {
            let spec = SynthTargetSpec {
                initial_range_m: class.initial_range_m
                    + cfg.range_jitter_m * rng.random_range(-1.0..=1.0),
                velocity_mps: class.velocity_mps
                    + cfg.velocity_jitter_mps * rng.random_range(-1.0..=1.0),
                amplitude: rng.random_range(cfg.amplitude_min..=cfg.amplitude_max),
                envelope_sigma_m: cfg.envelope_sigma_m,
                noise_std: cfg.noise_std,
                carrier_wavelength_m: WAVELENGTH_60GHZ_M,
                range_start_m: cfg.range_start_m,
                range_step_m: cfg.range_step_m,
                sensors: cfg.sensors,
            };
            let noise_seed: u64 = rng.random();
            let mut rec = synth_recording(
                &spec,
                cfg.sweeps,
                cfg.range_points,
                cfg.sweep_freq_hz,
                noise_seed,
            )?;
            rec.label = Some(label as u32);
            rec.user_id = i as u32 % cfg.users;
            rec.session_id = (i as u32 / cfg.users) % cfg.sessions;
            out.push(rec);
        }
    }
    Ok(out)
}
