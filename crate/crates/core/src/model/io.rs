//! `TRNW` float network container.
//!
//! ```text
//! magic "TRNW", u32 version
//! config: u32 tw, rp, sensors, classes, tcn_filters, time_steps,
//!         n_dilations, dilations..., cnn_channels x3, pool_kernels x6, dense_units x2
//! u32 tensor count, then per tensor: u32 ndim, u32 dims..., f32 values
//! ```
//! All fields little-endian.

use std::fs;
use std::path::Path;

use super::{build_tinyradarnn, ModelConfig, Network};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TRNW";
const VERSION: u32 = 1;

fn put(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub(crate) fn encode_config(cfg: &ModelConfig, out: &mut Vec<u8>) {
    for v in [
        cfg.tw,
        cfg.rp,
        cfg.sensors,
        cfg.classes,
        cfg.tcn_filters,
        cfg.time_steps,
        cfg.dilations.len(),
    ] {
        put(out, v);
    }
    cfg.dilations.iter().for_each(|&d| put(out, d));
    cfg.cnn_channels.iter().for_each(|&c| put(out, c));
    cfg.pool_kernels.iter().flatten().for_each(|&k| put(out, k));
    cfg.dense_units.iter().for_each(|&u| put(out, u));
}

pub fn encode_network(net: &Network) -> Vec<u8> {
    let cfg = &net.config;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    encode_config(cfg, &mut out);
    let params = net.params();
    put(&mut out, params.len());
    for p in params {
        put(&mut out, p.shape().len());
        p.shape().iter().for_each(|&d| put(&mut out, d));
        for &v in p.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Little-endian cursor shared by the binary model formats.
pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl Reader<'_> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Length {
                expected: end,
                actual: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    /// Fails unless every byte has been consumed.
    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Length {
                expected: self.pos,
                actual: self.bytes.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn decode_config(r: &mut Reader) -> Result<ModelConfig> {
    let mut header = [0usize; 7];
    for h in &mut header {
        *h = r.u32()?;
    }
    let [tw, rp, sensors, classes, tcn_filters, time_steps, n_dil] = header;
    if n_dil > 64 {
        return Err(Error::Format(format!(
            "corrupt model header: {n_dil} dilations"
        )));
    }
    let dilations = (0..n_dil).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let mut next = || r.u32();
    let cnn_channels = [next()?, next()?, next()?];
    let pool_kernels = [[next()?, next()?], [next()?, next()?], [next()?, next()?]];
    let dense_units = [next()?, next()?];
    Ok(ModelConfig {
        tw,
        rp,
        sensors,
        classes,
        tcn_filters,
        time_steps,
        dilations,
        cnn_channels,
        pool_kernels,
        dense_units,
    })
}

pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"TRNW\"".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported TRNW version {version}, expected {VERSION}"
        )));
    }
    let config = decode_config(&mut r)?;
    let mut net = build_tinyradarnn(&config, 0)?;

    let count = r.u32()?;
    if count != net.params().len() {
        return Err(Error::Format(format!(
            "blob has {count} tensors, network needs {}",
            net.params().len()
        )));
    }
    for p in net.params_mut() {
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if shape != p.shape() {
            return Err(Error::Format(format!(
                "tensor shape {shape:?} does not match {:?}",
                p.shape()
            )));
        }
        for v in p.data_mut() {
            *v = f64::from(r.f32()?);
        }
    }
    r.finish()?;
    Ok(net)
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    fs::write(path, encode_network(net))?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    decode_network(&fs::read(path)?)
}
