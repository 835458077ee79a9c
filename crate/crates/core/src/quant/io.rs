//! `TRQ1` quantized model container.
//!
//! ```text
//! magic "TRQ1", u32 version, model config (as in TRNW)
//! input params, u32 cnn layer count, u32 tcn layer count, layers...
//! layer: u8 op tag, u32 dims x4, u8 relu, u8 weight bits, f64 weight scale,
//!        input params, u8 has_output [, output params],
//!        u32 n, i16 weights x n, u32 m, i32 biases x m
//! params: u8 bits, u8 symmetric, f64 scale, i32 zero point
//! ```
//! All fields little-endian.

use std::fs;
use std::path::Path;

use super::{QuantLayer, QuantOp, QuantParams, QuantizedNetwork};
use crate::error::{Error, Result};
use crate::model::io::{decode_config, encode_config, Reader};

const MAGIC: &[u8; 4] = b"TRQ1";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_params(out: &mut Vec<u8>, p: &QuantParams) {
    out.push(p.bit_width);
    out.push(u8::from(p.symmetric));
    out.extend_from_slice(&p.scale.to_le_bytes());
    out.extend_from_slice(&p.zero_point.to_le_bytes());
}

fn read_params(r: &mut Reader) -> Result<QuantParams> {
    let bit_width = r.u8()?;
    let symmetric = r.u8()? != 0;
    let scale = r.f64()?;
    let zero_point = r.i32()?;
    if !matches!(bit_width, 8 | 16) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Format(format!(
            "invalid quantization params: {bit_width} bits, scale {scale}"
        )));
    }
    Ok(QuantParams {
        scale,
        zero_point,
        bit_width,
        symmetric,
    })
}

fn op_fields(op: &QuantOp) -> (u8, [usize; 4]) {
    match *op {
        QuantOp::Conv2d { kh, kw, cin, cout } => (0, [kh, kw, cin, cout]),
        QuantOp::CausalConv1d {
            k,
            cin,
            cout,
            dilation,
        } => (1, [k, cin, cout, dilation]),
        QuantOp::Residual {
            k,
            filters,
            dilation,
        } => (2, [k, filters, dilation, 0]),
        QuantOp::Dense { n, m } => (3, [n, m, 0, 0]),
        QuantOp::MaxPool2d { kh, kw } => (4, [kh, kw, 0, 0]),
        QuantOp::Flatten => (5, [0; 4]),
    }
}

fn op_from(tag: u8, d: [usize; 4]) -> Result<QuantOp> {
    Ok(match tag {
        0 => QuantOp::Conv2d {
            kh: d[0],
            kw: d[1],
            cin: d[2],
            cout: d[3],
        },
        1 => QuantOp::CausalConv1d {
            k: d[0],
            cin: d[1],
            cout: d[2],
            dilation: d[3],
        },
        2 => QuantOp::Residual {
            k: d[0],
            filters: d[1],
            dilation: d[2],
        },
        3 => QuantOp::Dense { n: d[0], m: d[1] },
        4 => QuantOp::MaxPool2d { kh: d[0], kw: d[1] },
        5 => QuantOp::Flatten,
        t => return Err(Error::Format(format!("unknown layer tag {t}"))),
    })
}

fn expected_sizes(op: &QuantOp) -> (usize, usize) {
    match *op {
        QuantOp::Conv2d { kh, kw, cin, cout } => (kh * kw * cin * cout, cout),
        QuantOp::CausalConv1d { k, cin, cout, .. } => (k * cin * cout, cout),
        QuantOp::Residual { k, filters, .. } => (k * filters * filters, filters),
        QuantOp::Dense { n, m } => (n * m, m),
        QuantOp::MaxPool2d { .. } | QuantOp::Flatten => (0, 0),
    }
}

pub fn encode_quantized(qnet: &QuantizedNetwork) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    encode_config(&qnet.config, &mut out);
    put_params(&mut out, &qnet.input);
    put_u32(&mut out, qnet.cnn.len());
    put_u32(&mut out, qnet.tcn.len());
    for l in qnet.layers() {
        let (tag, dims) = op_fields(&l.op);
        out.push(tag);
        dims.iter().for_each(|&d| put_u32(&mut out, d));
        out.push(u8::from(l.relu));
        out.push(l.weight_params.bit_width);
        out.extend_from_slice(&l.weight_params.scale.to_le_bytes());
        put_params(&mut out, &l.input);
        match &l.output {
            Some(p) => {
                out.push(1);
                put_params(&mut out, p);
            }
            None => out.push(0),
        }
        put_u32(&mut out, l.weight.len());
        l.weight
            .iter()
            .for_each(|w| out.extend_from_slice(&w.to_le_bytes()));
        put_u32(&mut out, l.bias.len());
        l.bias
            .iter()
            .for_each(|b| out.extend_from_slice(&b.to_le_bytes()));
    }
    out
}

fn read_layer(r: &mut Reader) -> Result<QuantLayer> {
    let tag = r.u8()?;
    let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
    let op = op_from(tag, dims)?;
    let relu = r.u8()? != 0;
    let bit_width = r.u8()?;
    let scale = r.f64()?;
    if bit_width != 16 || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Format(format!(
            "invalid weight params: {bit_width} bits, scale {scale}"
        )));
    }
    let weight_params = QuantParams {
        scale,
        zero_point: 0,
        bit_width,
        symmetric: true,
    };
    let input = read_params(r)?;
    let output = if r.u8()? != 0 {
        Some(read_params(r)?)
    } else {
        None
    };
    let (nw, nb) = expected_sizes(&op);
    let n = r.u32()?;
    if n != nw {
        return Err(Error::Format(format!(
            "layer {op:?} stores {n} weights, expected {nw}"
        )));
    }
    let weight = (0..n).map(|_| r.i16()).collect::<Result<Vec<_>>>()?;
    let m = r.u32()?;
    if m != nb {
        return Err(Error::Format(format!(
            "layer {op:?} stores {m} biases, expected {nb}"
        )));
    }
    let bias = (0..m).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
    Ok(QuantLayer {
        op,
        weight,
        weight_params,
        bias,
        relu,
        input,
        output,
    })
}

pub fn decode_quantized(bytes: &[u8]) -> Result<QuantizedNetwork> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"TRQ1\"".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!(
            "unsupported TRQ1 version {version}, expected {VERSION}"
        )));
    }
    let config = decode_config(&mut r)?;
    config.validate()?;
    let input = read_params(&mut r)?;
    let (n_cnn, n_tcn) = (r.u32()?, r.u32()?);
    if n_cnn + n_tcn > 4096 {
        return Err(Error::Format(format!(
            "corrupt layer count {}",
            n_cnn + n_tcn
        )));
    }
    let cnn = (0..n_cnn)
        .map(|_| read_layer(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let tcn = (0..n_tcn)
        .map(|_| read_layer(&mut r))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let qnet = QuantizedNetwork {
        config,
        input,
        cnn,
        tcn,
    };
    qnet.check_headroom()?;
    Ok(qnet)
}

pub fn save_quantized(path: impl AsRef<Path>, qnet: &QuantizedNetwork) -> Result<()> {
    fs::write(path, encode_quantized(qnet))?;
    Ok(())
}

pub fn load_quantized(path: impl AsRef<Path>) -> Result<QuantizedNetwork> {
    decode_quantized(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_sequence;
    use super::super::*;
    use super::*;
    use crate::model::{build_tinyradarnn, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> QuantizedNetwork {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        calibrate_and_quantize(&net, &[random_sequence(&cfg, &mut rng)]).unwrap()
    }

    #[test]
    fn roundtrip() {
        let q = sample();
        assert_eq!(decode_quantized(&encode_quantized(&q)).unwrap(), q);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_quantized(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_quantized(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_quantized(&bad), Err(Error::Format(_))));
        assert!(decode_quantized(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_quantized(&long), Err(Error::Length { .. })));
    }
}
