//! Layer kernels on row-major tensors.
//!
//! Spatial tensors are `H x W x C`, sequences are `T x C`.

use super::Tensor;
use crate::error::{Error, Result};

fn dims3(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::Validation(format!(
            "{what} expects an HxWxC tensor, got {s:?}"
        ))),
    }
}

fn dims2(x: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *x.shape() {
        [t, c] => Ok((t, c)),
        [c] => Ok((1, c)),
        ref s => Err(Error::Validation(format!(
            "{what} expects a TxC tensor, got {s:?}"
        ))),
    }
}

fn check_bias(bias: &Tensor, cout: usize, what: &str) -> Result<()> {
    if bias.shape() != [cout] {
        return Err(Error::Validation(format!(
            "{what} bias shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    Ok(())
}

/// Stride-1 convolution with zero "same" padding; `weight` is `kh x kw x cin x cout`.
///
/// `out(h, w, o) = b(o) + sum x(h + i - kh/2, w + j - kw/2, c) * W(i, j, c, o)`.
pub fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (h, w, cin) = dims3(x, "conv2d")?;
    let [kh, kw, wcin, cout] = *weight.shape() else {
        return Err(Error::Validation(format!(
            "conv2d weight must be 4-D, got {:?}",
            weight.shape()
        )));
    };
    if wcin != cin {
        return Err(Error::Validation(format!(
            "conv2d input has {cin} channels, weight expects {wcin}"
        )));
    }
    check_bias(bias, cout, "conv2d")?;
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![0.0; h * w * cout];
    for oh in 0..h {
        for ow in 0..w {
            let o = &mut out[(oh * w + ow) * cout..][..cout];
            o.copy_from_slice(bias.data());
            for i in 0..kh {
                let Some(ih) = (oh + i).checked_sub(ph).filter(|&v| v < h) else {
                    continue;
                };
                for j in 0..kw {
                    let Some(iw) = (ow + j).checked_sub(pw).filter(|&v| v < w) else {
                        continue;
                    };
                    let xs = &xd[(ih * w + iw) * cin..][..cin];
                    let wb = &wd[(i * kw + j) * cin * cout..][..cin * cout];
                    for (c, &xv) in xs.iter().enumerate() {
                        for (acc, &wv) in o.iter_mut().zip(&wb[c * cout..(c + 1) * cout]) {
                            *acc += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[h, w, cout], out)
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (h, w, cin) = dims3(x, "conv2d")?;
    let [kh, kw, _, cout] = *weight.shape() else {
        return Err(Error::Validation("conv2d weight must be 4-D".into()));
    };
    if grad_out.shape() != [h, w, cout] {
        return Err(Error::Validation(format!(
            "conv2d grad shape {:?}",
            grad_out.shape()
        )));
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; cout];
    for oh in 0..h {
        for ow in 0..w {
            let g = &gd[(oh * w + ow) * cout..][..cout];
            for (b, gv) in gb.iter_mut().zip(g) {
                *b += gv;
            }
            for i in 0..kh {
                let Some(ih) = (oh + i).checked_sub(ph).filter(|&v| v < h) else {
                    continue;
                };
                for j in 0..kw {
                    let Some(iw) = (ow + j).checked_sub(pw).filter(|&v| v < w) else {
                        continue;
                    };
                    let xo = (ih * w + iw) * cin;
                    let wo = (i * kw + j) * cin * cout;
                    for c in 0..cin {
                        let xv = xd[xo + c];
                        let wr = &wd[wo + c * cout..][..cout];
                        let gwr = &mut gw[wo + c * cout..][..cout];
                        let mut acc = 0.0;
                        for k in 0..cout {
                            acc += g[k] * wr[k];
                            gwr[k] += xv * g[k];
                        }
                        gx[xo + c] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(weight.shape(), gw)?,
        Tensor::new(&[cout], gb)?,
    ))
}

/// Non-overlapping max pooling (stride = kernel, trailing remainder dropped).
///
/// Also returns, per output cell, the flat input index of the first maximum
/// in row-major scan order.
pub fn maxpool2d_forward(x: &Tensor, kh: usize, kw: usize) -> Result<(Tensor, Vec<usize>)> {
    let (h, w, c) = dims3(x, "maxpool2d")?;
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(Error::Validation(format!(
            "pool kernel {kh}x{kw} does not fit input {h}x{w}"
        )));
    }
    let (oh, ow) = (h / kh, w / kw);
    let xd = x.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for ph in 0..oh {
        for pw in 0..ow {
            for ch in 0..c {
                let mut best = (ph * kh * w + pw * kw) * c + ch;
                for i in 0..kh {
                    for j in 0..kw {
                        let idx = ((ph * kh + i) * w + pw * kw + j) * c + ch;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(&[oh, ow, c], out)?, argmax))
}

pub fn maxpool2d_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::Validation(
            "maxpool2d gradient does not match stored indices".into(),
        ));
    }
    let mut gx = Tensor::zeros(input_shape);
    let gd = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gd[idx] += g;
    }
    Ok(gx)
}

/// Causal dilated convolution over time; `weight` is `k x cin x cout`.
///
/// Tap `j` reads `x(t - (k - 1 - j) * dilation)`, so the last tap is the
/// current step; history before `t = 0` is zero.
pub fn causal_conv1d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    let (t_len, cin) = dims2(x, "causal_conv1d")?;
    let [k, wcin, cout] = *weight.shape() else {
        return Err(Error::Validation(format!(
            "causal conv weight must be 3-D, got {:?}",
            weight.shape()
        )));
    };
    if wcin != cin {
        return Err(Error::Validation(format!(
            "causal conv input has {cin} channels, weight expects {wcin}"
        )));
    }
    if dilation == 0 {
        return Err(Error::Validation("dilation must be at least 1".into()));
    }
    check_bias(bias, cout, "causal conv")?;
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![0.0; t_len * cout];
    for t in 0..t_len {
        let o = &mut out[t * cout..][..cout];
        o.copy_from_slice(bias.data());
        for j in 0..k {
            let Some(src) = t.checked_sub((k - 1 - j) * dilation) else {
                continue;
            };
            let xs = &xd[src * cin..][..cin];
            let wb = &wd[j * cin * cout..][..cin * cout];
            for (c, &xv) in xs.iter().enumerate() {
                for (acc, &wv) in o.iter_mut().zip(&wb[c * cout..(c + 1) * cout]) {
                    *acc += xv * wv;
                }
            }
        }
    }
    Tensor::new(&[t_len, cout], out)
}

pub fn causal_conv1d_backward(
    x: &Tensor,
    weight: &Tensor,
    dilation: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t_len, cin) = dims2(x, "causal_conv1d")?;
    let [k, _, cout] = *weight.shape() else {
        return Err(Error::Validation("causal conv weight must be 3-D".into()));
    };
    if grad_out.len() != t_len * cout {
        return Err(Error::Validation(format!(
            "causal conv grad shape {:?}",
            grad_out.shape()
        )));
    }
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; cout];
    for t in 0..t_len {
        let g = &gd[t * cout..][..cout];
        for (b, gv) in gb.iter_mut().zip(g) {
            *b += gv;
        }
        for j in 0..k {
            let Some(src) = t.checked_sub((k - 1 - j) * dilation) else {
                continue;
            };
            for c in 0..cin {
                let xv = xd[src * cin + c];
                let wo = (j * cin + c) * cout;
                let mut acc = 0.0;
                for o in 0..cout {
                    acc += g[o] * wd[wo + o];
                    gw[wo + o] += xv * g[o];
                }
                gx[src * cin + c] += acc;
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(weight.shape(), gw)?,
        Tensor::new(&[cout], gb)?,
    ))
}

/// `y = x + relu(causal_conv1d(x))`. Also returns the pre-activation.
pub fn residual_block_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<(Tensor, Tensor)> {
    let (_, f) = dims2(x, "residual block")?;
    if weight.shape().get(2) != Some(&f) {
        return Err(Error::Validation(format!(
            "residual block needs equal input and output channels, input has {f}, weight {:?}",
            weight.shape()
        )));
    }
    let pre = causal_conv1d_forward(x, weight, bias, dilation)?;
    let mut y = x.clone();
    for (o, &p) in y.data_mut().iter_mut().zip(pre.data()) {
        if p > 0.0 {
            *o += p;
        }
    }
    Ok((y, pre))
}

pub fn residual_block_backward(
    x: &Tensor,
    pre: &Tensor,
    weight: &Tensor,
    dilation: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let gpre = Tensor::new(
        pre.shape(),
        grad_out
            .data()
            .iter()
            .zip(pre.data())
            .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
            .collect(),
    )?;
    let (mut gx, gw, gb) = causal_conv1d_backward(x, weight, dilation, &gpre)?;
    for (a, &g) in gx.data_mut().iter_mut().zip(grad_out.data()) {
        *a += g;
    }
    Ok((gx, gw, gb))
}

/// Affine map applied to every row of a `T x n` (or length-`n`) input; `weight` is `n x m`.
pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, n) = dims2(x, "dense")?;
    let [wn, m] = *weight.shape() else {
        return Err(Error::Validation(format!(
            "dense weight must be 2-D, got {:?}",
            weight.shape()
        )));
    };
    if wn != n {
        return Err(Error::Validation(format!(
            "dense input width {n}, weight expects {wn}"
        )));
    }
    check_bias(bias, m, "dense")?;
    let (xd, wd) = (x.data(), weight.data());
    let mut out = vec![0.0; rows * m];
    for r in 0..rows {
        let o = &mut out[r * m..][..m];
        o.copy_from_slice(bias.data());
        for (i, &xv) in xd[r * n..][..n].iter().enumerate() {
            for (acc, &wv) in o.iter_mut().zip(&wd[i * m..(i + 1) * m]) {
                *acc += xv * wv;
            }
        }
    }
    let shape: Vec<usize> = if x.shape().len() == 1 {
        vec![m]
    } else {
        vec![rows, m]
    };
    Tensor::new(&shape, out)
}

pub fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (rows, n) = dims2(x, "dense")?;
    let m = weight.shape()[1];
    if grad_out.len() != rows * m {
        return Err(Error::Validation(format!(
            "dense grad shape {:?}",
            grad_out.shape()
        )));
    }
    let (xd, wd, gd) = (x.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; wd.len()];
    let mut gb = vec![0.0; m];
    for r in 0..rows {
        let g = &gd[r * m..][..m];
        for (b, gv) in gb.iter_mut().zip(g) {
            *b += gv;
        }
        for i in 0..n {
            let xv = xd[r * n + i];
            let mut acc = 0.0;
            for o in 0..m {
                acc += g[o] * wd[i * m + o];
                gw[i * m + o] += xv * g[o];
            }
            gx[r * n + i] = acc;
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(weight.shape(), gw)?,
        Tensor::new(&[m], gb)?,
    ))
}
