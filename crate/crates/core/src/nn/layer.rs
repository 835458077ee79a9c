use std::fmt;

use rand::Rng;

use super::kernels::*;
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2D,
    MaxPool2D,
    /// A `1 x k` spatial convolution; computed by the 2-D kernel.
    Conv1D,
    CausalConv1D,
    Dense,
    ReLU,
    Flatten,
    ResidualBlock,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Conv2D => "2D Conv",
            Self::MaxPool2D => "Max Pooling",
            Self::Conv1D => "1D Conv",
            Self::CausalConv1D => "Causal 1D Convolution",
            Self::Dense => "Fully connected",
            Self::ReLU => "ReLU",
            Self::Flatten => "Flatten",
            Self::ResidualBlock => "Residual block",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

/// Static description of a layer, independent of its parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: Vec<usize>,
    pub channels_in: usize,
    pub channels_out: usize,
    pub dilation: usize,
    pub padding: Padding,
}

/// Weight initialization scheme; biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`, for layers followed by a ReLU.
    He,
    /// Uniform in `±sqrt(3 / fan_in)`, for the logits layer.
    LeCun,
}

fn init_tensor(shape: &[usize], fan_in: usize, init: Init, rng: &mut impl Rng) -> Tensor {
    let gain = match init {
        Init::He => 6.0,
        Init::LeCun => 3.0,
    };
    let bound = (gain / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `kh x kw x cin x cout`
    pub weight: Tensor,
    pub bias: Tensor,
    pub kind: LayerKind,
}

impl Conv2d {
    pub fn new(kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        let weight = init_tensor(&[kh, kw, cin, cout], kh * kw * cin, Init::He, rng);
        let kind = if kh == 1 {
            LayerKind::Conv1D
        } else {
            LayerKind::Conv2D
        };
        Self {
            weight,
            bias: Tensor::zeros(&[cout]),
            kind,
        }
    }

    fn dims(&self) -> [usize; 4] {
        let s = self.weight.shape();
        [s[0], s[1], s[2], s[3]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kh: usize,
    pub kw: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalConv1d {
    /// `k x cin x cout`
    pub weight: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
}

impl CausalConv1d {
    pub fn new(k: usize, cin: usize, cout: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        let weight = init_tensor(&[k, cin, cout], k * cin, Init::He, rng);
        Self {
            weight,
            bias: Tensor::zeros(&[cout]),
            dilation,
        }
    }

    fn dims(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[0], s[1], s[2]]
    }
}

/// `x + relu(causal_conv(x))` with a full channel-mixing kernel of size 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv: CausalConv1d,
}

impl ResidualBlock {
    pub fn new(filters: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: CausalConv1d::new(2, filters, filters, dilation, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `n x m`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(n: usize, m: usize, init: Init, rng: &mut impl Rng) -> Self {
        Self {
            weight: init_tensor(&[n, m], n, init, rng),
            bias: Tensor::zeros(&[m]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    CausalConv1d(CausalConv1d),
    Residual(ResidualBlock),
    Dense(Dense),
    Relu,
    Flatten,
}

/// Values a layer keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(Tensor),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Residual {
        input: Tensor,
        pre: Tensor,
    },
    Relu {
        mask: Vec<bool>,
        shape: Vec<usize>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        let spec = |kind, kernel: Vec<usize>, cin, cout, dilation, padding| LayerSpec {
            kind,
            kernel,
            channels_in: cin,
            channels_out: cout,
            dilation,
            padding,
        };
        match self {
            Layer::Conv2d(c) => {
                let [kh, kw, cin, cout] = c.dims();
                spec(c.kind, vec![kh, kw], cin, cout, 1, Padding::Same)
            }
            Layer::MaxPool2d(p) => spec(
                LayerKind::MaxPool2D,
                vec![p.kh, p.kw],
                0,
                0,
                1,
                Padding::Valid,
            ),
            Layer::CausalConv1d(c) => {
                let [k, cin, cout] = c.dims();
                spec(
                    LayerKind::CausalConv1D,
                    vec![k],
                    cin,
                    cout,
                    c.dilation,
                    Padding::Valid,
                )
            }
            Layer::Residual(r) => {
                let [k, cin, cout] = r.conv.dims();
                spec(
                    LayerKind::ResidualBlock,
                    vec![k],
                    cin,
                    cout,
                    r.conv.dilation,
                    Padding::Valid,
                )
            }
            Layer::Dense(d) => {
                let s = d.weight.shape();
                spec(LayerKind::Dense, vec![], s[0], s[1], 1, Padding::Valid)
            }
            Layer::Relu => spec(LayerKind::ReLU, vec![], 0, 0, 1, Padding::Valid),
            Layer::Flatten => spec(LayerKind::Flatten, vec![], 0, 0, 1, Padding::Valid),
        }
    }

    /// Output shape for a given input shape, or an error naming the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spec = self.spec();
        let bad = |why: String| Err(Error::Validation(format!("{}: {why}", spec.kind)));
        match (self, input) {
            (Layer::Conv2d(_), &[h, w, c]) => {
                if c != spec.channels_in {
                    return bad(format!(
                        "input has {c} channels, kernel expects {}",
                        spec.channels_in
                    ));
                }
                Ok(vec![h, w, spec.channels_out])
            }
            (Layer::MaxPool2d(p), &[h, w, c]) => {
                if p.kh == 0 || p.kw == 0 || p.kh > h || p.kw > w {
                    return bad(format!("kernel {}x{} does not fit {h}x{w}", p.kh, p.kw));
                }
                Ok(vec![h / p.kh, w / p.kw, c])
            }
            (Layer::CausalConv1d(_) | Layer::Residual(_) | Layer::Dense(_), &[t, c]) => {
                if c != spec.channels_in {
                    return bad(format!(
                        "input has {c} channels, expected {}",
                        spec.channels_in
                    ));
                }
                Ok(vec![t, spec.channels_out])
            }
            (Layer::Relu, s) => Ok(s.to_vec()),
            (Layer::Flatten, s) => Ok(vec![s.iter().product()]),
            (_, s) => bad(format!("unsupported input shape {s:?}")),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Layer::Conv2d(c) => conv2d_forward(x, &c.weight, &c.bias)?,
            Layer::MaxPool2d(p) => maxpool2d_forward(x, p.kh, p.kw)?.0,
            Layer::CausalConv1d(c) => causal_conv1d_forward(x, &c.weight, &c.bias, c.dilation)?,
            Layer::Residual(r) => {
                residual_block_forward(x, &r.conv.weight, &r.conv.bias, r.conv.dilation)?.0
            }
            Layer::Dense(d) => dense_forward(x, &d.weight, &d.bias)?,
            Layer::Relu => Tensor::new(x.shape(), x.data().iter().map(|&v| v.max(0.0)).collect())?,
            Layer::Flatten => x.clone().reshape(&[x.len()])?,
        })
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, LayerCache)> {
        Ok(match self {
            Layer::MaxPool2d(p) => {
                let (y, argmax) = maxpool2d_forward(x, p.kh, p.kw)?;
                (
                    y,
                    LayerCache::Pool {
                        input_shape: x.shape().to_vec(),
                        argmax,
                    },
                )
            }
            Layer::Residual(r) => {
                let (y, pre) =
                    residual_block_forward(x, &r.conv.weight, &r.conv.bias, r.conv.dilation)?;
                (
                    y,
                    LayerCache::Residual {
                        input: x.clone(),
                        pre,
                    },
                )
            }
            Layer::Relu => {
                let mask = x.data().iter().map(|&v| v > 0.0).collect();
                (
                    self.forward(x)?,
                    LayerCache::Relu {
                        mask,
                        shape: x.shape().to_vec(),
                    },
                )
            }
            Layer::Flatten => (
                self.forward(x)?,
                LayerCache::Flatten {
                    input_shape: x.shape().to_vec(),
                },
            ),
            _ => (self.forward(x)?, LayerCache::Input(x.clone())),
        })
    }

    /// Returns the input gradient and the parameter gradients in [`Layer::params`] order.
    pub fn backward(&self, cache: &LayerCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        Ok(match (self, cache) {
            (Layer::Conv2d(c), LayerCache::Input(x)) => {
                let (gx, gw, gb) = conv2d_backward(x, &c.weight, grad_out)?;
                (gx, vec![gw, gb])
            }
            (
                Layer::MaxPool2d(_),
                LayerCache::Pool {
                    input_shape,
                    argmax,
                },
            ) => (maxpool2d_backward(input_shape, argmax, grad_out)?, vec![]),
            (Layer::CausalConv1d(c), LayerCache::Input(x)) => {
                let (gx, gw, gb) = causal_conv1d_backward(x, &c.weight, c.dilation, grad_out)?;
                (gx, vec![gw, gb])
            }
            (Layer::Residual(r), LayerCache::Residual { input, pre }) => {
                let (gx, gw, gb) =
                    residual_block_backward(input, pre, &r.conv.weight, r.conv.dilation, grad_out)?;
                (gx, vec![gw, gb])
            }
            (Layer::Dense(d), LayerCache::Input(x)) => {
                let (gx, gw, gb) = dense_backward(x, &d.weight, grad_out)?;
                (gx, vec![gw, gb])
            }
            (Layer::Relu, LayerCache::Relu { mask, shape }) => {
                let g = grad_out
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&g, &m)| if m { g } else { 0.0 })
                    .collect();
                (Tensor::new(shape, g)?, vec![])
            }
            (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                (grad_out.clone().reshape(input_shape)?, vec![])
            }
            (layer, _) => {
                return Err(Error::State(format!(
                    "cache does not belong to a {} layer",
                    layer.spec().kind
                )));
            }
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::CausalConv1d(c) => vec![&c.weight, &c.bias],
            Layer::Residual(r) => vec![&r.conv.weight, &r.conv.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::CausalConv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Residual(r) => vec![&mut r.conv.weight, &mut r.conv.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Multiply-accumulates for one forward pass on `input`.
    pub fn macs(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        let elems: usize = out.iter().product();
        let spec = self.spec();
        Ok(match self {
            Layer::Conv2d(_) | Layer::CausalConv1d(_) | Layer::Residual(_) => {
                (elems * spec.kernel.iter().product::<usize>() * spec.channels_in) as u64
            }
            Layer::Dense(_) => (elems * spec.channels_in) as u64,
            _ => 0,
        })
    }

    /// Comparisons performed by pooling layers (not counted as MACs).
    pub fn comparisons(&self, input: &[usize]) -> Result<u64> {
        Ok(match self {
            Layer::MaxPool2d(p) => {
                let out: usize = self.output_shape(input)?.iter().product();
                (out * (p.kh * p.kw - 1)) as u64
            }
            _ => 0,
        })
    }
}
