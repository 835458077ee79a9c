//! `TRD1` little-endian recording container.
//!
//! ```text
//! magic      4 bytes  "TRD1"
//! version    u32      1
//! C, N, RP   u32 x3   sensors, sweeps, range points
//! sweep_freq u32      millihertz
//! label      u32      u32::MAX = unlabeled
//! user_id    u32
//! session_id u32
//! range_start_m, range_step_m   f64 x2
//! payload    C*N*RP x (f32 re, f32 im), sensor-major, then time, then range
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex32;

use super::SweepRecording;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TRD1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 8 * 4 + 2 * 8;
const UNLABELED: u32 = u32::MAX;

pub fn encode_recording(rec: &SweepRecording) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + rec.data().len() * 8);
    out.extend_from_slice(MAGIC);
    for field in [
        VERSION,
        rec.sensors() as u32,
        rec.sweeps() as u32,
        rec.range_points() as u32,
        rec.sweep_freq_mhz(),
        rec.label.unwrap_or(UNLABELED),
        rec.user_id,
        rec.session_id,
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    out.extend_from_slice(&rec.range_start_m.to_le_bytes());
    out.extend_from_slice(&rec.range_step_m.to_le_bytes());
    for v in rec.data() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_recording(bytes: &[u8]) -> Result<SweepRecording> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(Error::Format(format!(
            "bad magic {found:?}, expected \"TRD1\""
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let u32_at = |i: usize| {
        let o = 4 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap())
    };
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u32_at(0);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported TRD1 version {version}")));
    }
    let (sensors, sweeps, rp) = (u32_at(1) as usize, u32_at(2) as usize, u32_at(3) as usize);
    if !(1..=2).contains(&sensors) {
        return Err(Error::Validation(format!(
            "sensor count must be 1 or 2, got {sensors}"
        )));
    }
    let freq = u32_at(4);
    let label = match u32_at(5) {
        UNLABELED => None,
        l => Some(l),
    };
    let (user_id, session_id) = (u32_at(6), u32_at(7));
    let range_start_m = f64_at(36);
    let range_step_m = f64_at(44);

    let count = sensors
        .checked_mul(sweeps)
        .and_then(|v| v.checked_mul(rp))
        .ok_or_else(|| Error::Validation("payload dimensions overflow".into()))?;
    let expected = HEADER_LEN + count * 8;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    SweepRecording::new(
        sensors,
        sweeps,
        rp,
        data,
        freq,
        range_start_m,
        range_step_m,
        label,
        user_id,
        session_id,
    )
}

pub fn write_recording(path: impl AsRef<Path>, rec: &SweepRecording) -> Result<()> {
    fs::write(path, encode_recording(rec))?;
    Ok(())
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<SweepRecording> {
    decode_recording(&fs::read(path)?)
}

/// Entry point for converting recordings of the public gesture dataset.
///
/// Not implemented. The public download's on-disk layout is undocumented and
/// may hold either raw I/Q sweeps (convert by filling a [`SweepRecording`]
/// with sensor-major complex samples at 0.483 mm range spacing) or already
/// preprocessed range-Doppler features (those would bypass `frame_stream` and
/// `compute_rfdm` entirely and feed `GestureDataset` directly).
pub fn convert_public_recording(path: impl AsRef<Path>) -> Result<SweepRecording> {
    Err(Error::Unsupported(format!(
        "no converter for public dataset file {}",
        path.as_ref().display()
    )))
}
