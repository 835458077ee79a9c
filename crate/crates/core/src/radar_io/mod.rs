//! Sweep recordings, the `TRD1` container and fixed-window framing.

mod corpus;
mod synth;
mod trd1;

pub use corpus::{synth_corpus, CorpusConfig, GestureClass};
pub use synth::{predict_doppler_bin, synth_recording, SynthTargetSpec, WAVELENGTH_60GHZ_M};
pub use trd1::{
    convert_public_recording, decode_recording, encode_recording, read_recording, write_recording,
};

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

/// Range resolution of the pulsed 60 GHz sensor.
pub const RANGE_STEP_M: f64 = 0.483e-3;

/// Sweeps per frame used throughout the pipeline.
pub const DEFAULT_TW: usize = 32;

/// Complex distance sweeps from one or two sensors plus acquisition metadata.
///
/// Samples are stored sensor-major, then time, then range, exactly as in the
/// `TRD1` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecording {
    sensors: usize,
    sweeps: usize,
    range_points: usize,
    data: Vec<Complex32>,
    sweep_freq_mhz: u32,
    pub range_start_m: f64,
    pub range_step_m: f64,
    pub label: Option<u32>,
    pub user_id: u32,
    pub session_id: u32,
    /// Set by the simulator when the target left the sampled range window.
    pub target_left_window: bool,
}

impl SweepRecording {
    /// `sweep_freq_mhz` is the sweep rate in millihertz, the unit stored on disk.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sensors: usize,
        sweeps: usize,
        range_points: usize,
        data: Vec<Complex32>,
        sweep_freq_mhz: u32,
        range_start_m: f64,
        range_step_m: f64,
        label: Option<u32>,
        user_id: u32,
        session_id: u32,
    ) -> Result<Self> {
        if !(1..=2).contains(&sensors) {
            return Err(Error::Validation(format!(
                "sensor count must be 1 or 2, got {sensors}"
            )));
        }
        if sweeps == 0 || range_points == 0 {
            return Err(Error::Validation(format!(
                "recording needs at least one sweep and one range point (N={sweeps}, RP={range_points})"
            )));
        }
        if sweep_freq_mhz == 0 {
            return Err(Error::Validation("sweep frequency must be positive".into()));
        }
        if !(range_step_m > 0.0) {
            return Err(Error::Validation(format!(
                "range step must be positive, got {range_step_m}"
            )));
        }
        let expected = sensors * sweeps * range_points;
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "payload holds {} samples, dimensions need {expected}",
                data.len()
            )));
        }
        Ok(Self {
            sensors,
            sweeps,
            range_points,
            data,
            sweep_freq_mhz,
            range_start_m,
            range_step_m,
            label,
            user_id,
            session_id,
            target_left_window: false,
        })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn range_points(&self) -> usize {
        self.range_points
    }

    pub fn sweep_freq_mhz(&self) -> u32 {
        self.sweep_freq_mhz
    }

    pub fn sweep_freq_hz(&self) -> f64 {
        f64::from(self.sweep_freq_mhz) / 1000.0
    }

    pub fn data(&self) -> &[Complex32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, sensor: usize, t: usize, r: usize) -> Complex32 {
        self.data[(sensor * self.sweeps + t) * self.range_points + r]
    }
}

/// `tw` consecutive sweeps of one recording, laid out time × range × sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    tw: usize,
    range_points: usize,
    sensors: usize,
    data: Vec<Complex64>,
    pub window_index: usize,
}

impl RawFrame {
    pub fn new(
        tw: usize,
        range_points: usize,
        sensors: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if tw == 0 || range_points == 0 || sensors == 0 {
            return Err(Error::Validation(format!(
                "frame dimensions must be non-zero ({tw}x{range_points}x{sensors})"
            )));
        }
        if data.len() != tw * range_points * sensors {
            return Err(Error::Validation(format!(
                "frame data has {} values, {tw}x{range_points}x{sensors} needs {}",
                data.len(),
                tw * range_points * sensors
            )));
        }
        Ok(Self {
            tw,
            range_points,
            sensors,
            data,
            window_index: 0,
        })
    }

    pub fn from_fn(
        tw: usize,
        range_points: usize,
        sensors: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(tw * range_points * sensors);
        for t in 0..tw {
            for r in 0..range_points {
                for c in 0..sensors {
                    data.push(f(t, r, c));
                }
            }
        }
        Self::new(tw, range_points, sensors, data)
    }

    pub fn tw(&self) -> usize {
        self.tw
    }

    pub fn range_points(&self) -> usize {
        self.range_points
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, t: usize, r: usize, c: usize) -> Complex64 {
        self.data[(t * self.range_points + r) * self.sensors + c]
    }
}

/// Cuts a recording into windows of `tw` sweeps advancing by `stride`.
///
/// Yields `floor((N - tw) / stride) + 1` frames; a trailing remainder shorter
/// than `tw` is dropped.
pub fn frame_stream(rec: &SweepRecording, tw: usize, stride: usize) -> Result<Vec<RawFrame>> {
    if tw == 0 {
        return Err(Error::Validation("frame length must be at least 1".into()));
    }
    if stride == 0 {
        return Err(Error::Validation("frame stride must be at least 1".into()));
    }
    if tw > rec.sweeps {
        return Err(Error::EmptyResult(format!(
            "recording has {} sweeps, fewer than the frame length {tw}",
            rec.sweeps
        )));
    }
    let count = (rec.sweeps - tw) / stride + 1;
    let (rp, c) = (rec.range_points, rec.sensors);
    let frames = (0..count)
        .map(|k| {
            let start = k * stride;
            let mut data = Vec::with_capacity(tw * rp * c);
            for t in start..start + tw {
                for r in 0..rp {
                    for s in 0..c {
                        let v = rec.at(s, t, r);
                        data.push(Complex64::new(f64::from(v.re), f64::from(v.im)));
                    }
                }
            }
            RawFrame {
                tw,
                range_points: rp,
                sensors: c,
                data,
                window_index: k,
            }
        })
        .collect();
    Ok(frames)
}

#[cfg(test)]
pub(crate) fn test_recording(sensors: usize, sweeps: usize, rp: usize) -> SweepRecording {
    let data = (0..sensors * sweeps * rp)
        .map(|i| Complex32::new(i as f32 * 0.5, -(i as f32)))
        .collect();
    SweepRecording::new(
        sensors,
        sweeps,
        rp,
        data,
        160_000,
        0.07,
        RANGE_STEP_M,
        Some(3),
        7,
        2,
    )
    .unwrap()
}
