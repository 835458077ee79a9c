//! `TRDS` preprocessed dataset: normalized RFDM sequences ready for training.
//!
//! ```text
//! magic "TRDS", u32 version, u32 classes, tw, rp, channels, time_steps, count
//! per sequence: u32 label, user, session, then time_steps * tw * rp * channels f32
//! ```
//! All fields little-endian.

use tinyradar::features::{FeatureFrame, FeatureKind};
use tinyradar::train::{GestureDataset, Sequence};
use tinyradar::{Error, Result};

const MAGIC: &[u8; 4] = b"TRDS";
const VERSION: u32 = 1;

pub fn encode_dataset(ds: &GestureDataset) -> Result<Vec<u8>> {
    let first = ds
        .sequences
        .first()
        .and_then(|s| s.frames.first())
        .ok_or_else(|| Error::EmptyResult("dataset has no frames".into()))?;
    let [tw, rp, ch] = first.shape();
    let t = ds.sequences[0].frames.len();
    let mut out = MAGIC.to_vec();
    let header = [VERSION as usize, ds.class_count, tw, rp, ch, t, ds.len()];
    header
        .iter()
        .for_each(|&v| out.extend_from_slice(&(v as u32).to_le_bytes()));
    for s in &ds.sequences {
        if s.frames.len() != t || s.frames.iter().any(|f| f.shape() != [tw, rp, ch]) {
            return Err(Error::Validation("sequences differ in shape".into()));
        }
        for v in [s.label as u32, s.user_id, s.session_id] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for f in &s.frames {
            f.data()
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes()));
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<GestureDataset> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"TRDS\"".into()));
    }
    let mut pos = 4;
    let mut word = || -> Result<u32> {
        let b = bytes.get(pos..pos + 4).ok_or(Error::Length {
            expected: pos + 4,
            actual: bytes.len(),
        })?;
        pos += 4;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    };
    let version = word()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported TRDS version {version}, expected {VERSION}"
        )));
    }
    let mut h = [0usize; 6];
    for v in &mut h {
        *v = word()? as usize;
    }
    let [classes, tw, rp, ch, t, count] = h;
    let frame_len = tw * rp * ch;
    let expected = 32 + count * (12 + 4 * t * frame_len);
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let mut pos = 32;
    let u32_at = |pos: &mut usize| {
        let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        v
    };
    let mut sequences = Vec::with_capacity(count);
    for _ in 0..count {
        let label = u32_at(&mut pos) as usize;
        let user_id = u32_at(&mut pos);
        let session_id = u32_at(&mut pos);
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let data = bytes[pos..pos + 4 * frame_len]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            pos += 4 * frame_len;
            frames.push(FeatureFrame::new(tw, rp, ch, data, FeatureKind::Rfdm)?);
        }
        sequences.push(Sequence {
            frames,
            label,
            user_id,
            session_id,
        });
    }
    GestureDataset::new(sequences, classes)
}
