//! The 2D CNN + causal dilated TCN gesture network.
//!
//! Each frame goes through the CNN independently; the `T` flattened feature
//! vectors are stacked along time and passed through a pointwise compression
//! conv, residual blocks of dilation 1, 2, 4 and a per-step classifier.

mod accounting;
mod config;
mod gradcheck;
pub(crate) mod io;

pub use accounting::{
    count_macs, count_params, lstm_param_formula, tcn_param_formula, LayerRow, MacBreakdown,
    MacRow, ParamBreakdown, Stage, TcnVariant,
};
pub use config::ModelConfig;
pub use gradcheck::{grad_check, grad_check_against, kink_margin};
pub use io::{decode_network, encode_network, load_network, save_network};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureFrame;
use crate::nn::{
    CausalConv1d, Conv2d, Dense, Init, Layer, LayerCache, MaxPool2d, Parameterized, ResidualBlock,
    Sequential, Tensor,
};

/// CNN kernels `(kh, kw)` of the three convolution stages.
pub const CNN_KERNELS: [[usize; 2]; 3] = [[3, 5], [3, 5], [1, 7]];

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    /// Applied to one `TW x RP x C` frame, ends in a flatten.
    pub cnn: Sequential,
    /// Applied to the `T x D` stack of CNN outputs, yields `T x classes` logits.
    pub tcn: Sequential,
}

/// Cached activations of one training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    cnn: Vec<Vec<LayerCache>>,
    tcn: Vec<LayerCache>,
}

/// Parameter gradients aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self(
            net.params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::Validation("gradient sets differ in length".into()));
        }
        self.0
            .iter_mut()
            .zip(&other.0)
            .try_for_each(|(a, b)| a.add_assign(b))
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|g| g.scale(k));
    }
}

/// Builds the network for `cfg` with weights drawn from `seed`.
pub fn build_tinyradarnn(cfg: &ModelConfig, seed: u64) -> Result<Network> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c1, c2, c3] = cfg.cnn_channels;
    let mut cnn = Vec::new();
    for (i, (&[kh, kw], (cin, cout))) in CNN_KERNELS
        .iter()
        .zip([(cfg.sensors, c1), (c1, c2), (c2, c3)])
        .enumerate()
    {
        cnn.push(Layer::Conv2d(Conv2d::new(kh, kw, cin, cout, &mut rng)));
        cnn.push(Layer::Relu);
        let [ph, pw] = cfg.pool_kernels[i];
        cnn.push(Layer::MaxPool2d(MaxPool2d { kh: ph, kw: pw }));
    }
    cnn.push(Layer::Flatten);
    let cnn = Sequential::new(cnn);

    let chain = checked_chain(&cnn, &[cfg.tw, cfg.rp, cfg.sensors], "cnn")?;
    let flat = chain.last().unwrap()[0];
    let f = cfg.tcn_filters;
    let [d1, d2] = cfg.dense_units;
    let mut tcn = vec![Layer::CausalConv1d(CausalConv1d::new(
        1, flat, f, 1, &mut rng,
    ))];
    tcn.extend(
        cfg.dilations
            .iter()
            .map(|&d| Layer::Residual(ResidualBlock::new(f, d, &mut rng))),
    );
    tcn.extend([
        Layer::Dense(Dense::new(f, d1, Init::He, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::new(d1, d2, Init::He, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::new(d2, cfg.classes, Init::LeCun, &mut rng)),
    ]);
    let tcn = Sequential::new(tcn);
    checked_chain(&tcn, &[cfg.time_steps, flat], "tcn")?;
    Ok(Network {
        config: cfg.clone(),
        cnn,
        tcn,
    })
}

fn checked_chain(seq: &Sequential, input: &[usize], part: &str) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input.to_vec()];
    for (i, layer) in seq.layers.iter().enumerate() {
        let next = layer
            .output_shape(shapes.last().unwrap())
            .map_err(|e| Error::Build {
                layer: format!("{part}[{i}] {}", layer.spec().kind),
                reason: e.to_string(),
            })?;
        if next.contains(&0) {
            return Err(Error::Build {
                layer: format!("{part}[{i}] {}", layer.spec().kind),
                reason: format!("produces empty shape {next:?}"),
            });
        }
        shapes.push(next);
    }
    Ok(shapes)
}

impl Network {
    pub fn frame_shape(&self) -> [usize; 3] {
        [self.config.tw, self.config.rp, self.config.sensors]
    }

    /// Width of the flattened CNN output.
    pub fn feature_width(&self) -> usize {
        self.cnn
            .shape_chain(&self.frame_shape())
            .map(|c| c.last().unwrap()[0])
            .unwrap_or(0)
    }

    fn check_frames(&self, frames: &[FeatureFrame]) -> Result<()> {
        if frames.len() != self.config.time_steps {
            return Err(Error::Validation(format!(
                "expected {} frames, got {}",
                self.config.time_steps,
                frames.len()
            )));
        }
        let want = self.frame_shape();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.shape() != want) {
            return Err(Error::Validation(format!(
                "frame {i} has shape {:?}, expected {want:?}",
                f.shape()
            )));
        }
        Ok(())
    }

    fn frame_tensor(&self, frame: &FeatureFrame) -> Result<Tensor> {
        Tensor::new(&self.frame_shape(), frame.data().to_vec())
    }

    /// CNN feature vector of a single frame.
    pub fn embed_frame(&self, frame: &FeatureFrame) -> Result<Tensor> {
        if frame.shape() != self.frame_shape() {
            return Err(Error::Validation(format!(
                "frame has shape {:?}, expected {:?}",
                frame.shape(),
                self.frame_shape()
            )));
        }
        self.cnn.forward(&self.frame_tensor(frame)?)
    }

    /// Logits from a `T x D` stack of CNN features.
    pub fn classify_features(&self, features: &Tensor) -> Result<Tensor> {
        self.tcn.forward(features)
    }

    /// `T x classes` logits, one row per time step.
    pub fn forward_sequence(&self, frames: &[FeatureFrame]) -> Result<Tensor> {
        self.check_frames(frames)?;
        let stacked = frames
            .iter()
            .map(|f| self.embed_frame(f).map(Tensor::into_data))
            .collect::<Result<Vec<_>>>()?
            .concat();
        let width = stacked.len() / frames.len();
        self.tcn
            .forward(&Tensor::new(&[frames.len(), width], stacked)?)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_train(&self, frames: &[FeatureFrame]) -> Result<(Tensor, Tape)> {
        self.check_frames(frames)?;
        let mut stacked = Vec::new();
        let mut cnn_caches = Vec::with_capacity(frames.len());
        for f in frames {
            let (y, caches) = self.cnn.forward_cached(&self.frame_tensor(f)?)?;
            stacked.extend_from_slice(y.data());
            cnn_caches.push(caches);
        }
        let width = stacked.len() / frames.len();
        let (logits, tcn_caches) = self
            .tcn
            .forward_cached(&Tensor::new(&[frames.len(), width], stacked)?)?;
        Ok((
            logits,
            Tape {
                cnn: cnn_caches,
                tcn: tcn_caches,
            },
        ))
    }

    /// Reverse-mode gradients of all parameters given `d loss / d logits`.
    pub fn backward(&self, tape: &Tape, grad_logits: &Tensor) -> Result<Gradients> {
        if tape.cnn.len() != self.config.time_steps {
            return Err(Error::State(format!(
                "tape holds {} frames, network expects {}",
                tape.cnn.len(),
                self.config.time_steps
            )));
        }
        let (g_features, tcn_grads) = self.tcn.backward(&tape.tcn, grad_logits)?;
        let width = g_features.len() / tape.cnn.len();
        let mut cnn_grads: Vec<Tensor> = self
            .cnn
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        for (t, caches) in tape.cnn.iter().enumerate() {
            let g = Tensor::new(
                &[width],
                g_features.data()[t * width..(t + 1) * width].to_vec(),
            )?;
            let (_, grads) = self.cnn.backward(caches, &g)?;
            for (acc, g) in cnn_grads.iter_mut().zip(&grads) {
                acc.add_assign(g)?;
            }
        }
        cnn_grads.extend(tcn_grads);
        Ok(Gradients(cnn_grads))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.cnn.params();
        p.extend(self.tcn.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.cnn.params_mut();
        p.extend(self.tcn.params_mut());
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (part, seq) in [("cnn", &self.cnn), ("tcn", &self.tcn)] {
            for (i, layer) in seq.layers.iter().enumerate() {
                if !layer.params().is_empty() {
                    names.push(format!("{part}.{i}.weight"));
                    names.push(format!("{part}.{i}.bias"));
                }
            }
        }
        names
    }
}

impl Parameterized for Network {
    fn params(&self) -> Vec<&Tensor> {
        Network::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Network::params_mut(self)
    }

    fn param_names(&self) -> Vec<String> {
        Network::param_names(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand::Rng;

    fn random_frames(cfg: &ModelConfig, seed: u64) -> Vec<FeatureFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cfg.time_steps)
            .map(|_| {
                let n = cfg.tw * cfg.rp * cfg.sensors;
                let data = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                FeatureFrame::new(cfg.tw, cfg.rp, cfg.sensors, data, FeatureKind::Rfdm).unwrap()
            })
            .collect()
    }

    #[test]
    fn eleven_gesture_flatten_width() {
        let net = build_tinyradarnn(&ModelConfig::eleven_gesture(), 0).unwrap();
        assert_eq!(net.feature_width(), 384);
    }

    #[test]
    fn five_gesture_flatten_width() {
        let net = build_tinyradarnn(&ModelConfig::five_gesture(), 0).unwrap();
        let chain = net.cnn.shape_chain(&net.frame_shape()).unwrap();
        // conv, relu, pool triples: widths 414 -> 82 -> 16 -> 2
        assert_eq!(chain[3], vec![10, 82, 16]);
        assert_eq!(chain[6], vec![3, 16, 32]);
        assert_eq!(chain[9], vec![3, 2, 64]);
        assert_eq!(net.feature_width(), 384);
    }

    #[test]
    fn build_error_names_layer() {
        let cfg = ModelConfig {
            rp: 40,
            ..ModelConfig::eleven_gesture()
        };
        // 40 -> 8 -> 1, then a 1x7 pool cannot fit
        match build_tinyradarnn(&cfg, 0) {
            Err(Error::Build { layer, .. }) => assert!(layer.contains("cnn[8]"), "{layer}"),
            other => panic!("expected build error, got {other:?}"),
        }
    }

    #[test]
    fn toy_forward_shape_and_zero_input_rows() {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, 1).unwrap();
        let frames = vec![FeatureFrame::zeros(cfg.tw, cfg.rp, cfg.sensors); cfg.time_steps];
        let logits = net.forward_sequence(&frames).unwrap();
        assert_eq!(logits.shape(), &[cfg.time_steps, cfg.classes]);
        let k = cfg.classes;
        for t in 1..cfg.time_steps {
            assert_eq!(&logits.data()[t * k..(t + 1) * k], &logits.data()[..k]);
        }
    }

    #[test]
    fn eleven_gesture_logit_shape() {
        let cfg = ModelConfig::eleven_gesture();
        let net = build_tinyradarnn(&cfg, 1).unwrap();
        let logits = net.forward_sequence(&random_frames(&cfg, 2)).unwrap();
        assert_eq!(logits.shape(), &[5, 11]);
    }

    #[test]
    fn perturbing_last_frame_leaves_earlier_rows() {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, 3).unwrap();
        let frames = random_frames(&cfg, 4);
        let base = net.forward_sequence(&frames).unwrap();
        let mut changed = frames.clone();
        changed[4].data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        let out = net.forward_sequence(&changed).unwrap();
        let k = cfg.classes;
        assert_eq!(&base.data()[..4 * k], &out.data()[..4 * k]);
        assert_ne!(&base.data()[4 * k..], &out.data()[4 * k..]);
    }

    #[test]
    fn frame_validation() {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, 0).unwrap();
        let frames = random_frames(&cfg, 0);
        assert!(net.forward_sequence(&frames[..3]).is_err());
        let mut wrong = frames.clone();
        wrong[1] = FeatureFrame::zeros(cfg.tw, cfg.rp + 1, cfg.sensors);
        assert!(net.forward_sequence(&wrong).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, 0).unwrap();
        let (logits, tape) = net.forward_train(&random_frames(&cfg, 1)).unwrap();
        let grads = net.backward(&tape, &Tensor::zeros(logits.shape())).unwrap();
        assert_eq!(grads.0.len(), net.params().len());
        assert!(grads.0.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn foreign_tape_is_state_error() {
        let toy = ModelConfig::toy();
        let other = ModelConfig {
            time_steps: 3,
            ..toy.clone()
        };
        let a = build_tinyradarnn(&toy, 0).unwrap();
        let b = build_tinyradarnn(&other, 0).unwrap();
        let frames = random_frames(&other, 0);
        let (logits, tape) = b.forward_train(&frames).unwrap();
        assert!(matches!(a.backward(&tape, &logits), Err(Error::State(_))));
    }

    #[test]
    fn training_forward_matches_inference() {
        let cfg = ModelConfig::toy();
        let net = build_tinyradarnn(&cfg, 5).unwrap();
        let frames = random_frames(&cfg, 6);
        assert_eq!(
            net.forward_train(&frames).unwrap().0,
            net.forward_sequence(&frames).unwrap()
        );
    }
}
