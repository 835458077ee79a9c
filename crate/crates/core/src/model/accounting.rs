//! Parameter, MAC and layer-shape accounting.

use std::fmt;

use super::Network;
use crate::error::Result;
use crate::nn::{Layer, LayerKind, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub cnn: usize,
    pub tcn: usize,
    pub total: usize,
}

/// Scalar parameter counts (weights and biases) as constructed.
pub fn count_params(net: &Network) -> ParamBreakdown {
    let cnn = net.cnn.param_count();
    let tcn = net.tcn.param_count();
    ParamBreakdown {
        cnn,
        tcn,
        total: cnn + tcn,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcnVariant {
    /// One convolution per residual block.
    Proposed,
    /// Two convolutions per residual block.
    Original,
}

/// Parameters of three residual blocks with `filters` channels and kernel size 2.
pub fn tcn_param_formula(variant: TcnVariant, filters: u64) -> u64 {
    let block_conv = 2 * filters * filters + filters;
    match variant {
        TcnVariant::Proposed => 3 * block_conv,
        TcnVariant::Original => 6 * block_conv,
    }
}

/// Three stacked LSTM layers of width `filters`, four gates, input and recurrent biases.
pub fn lstm_param_formula(filters: u64) -> u64 {
    3 * (8 * filters * filters + 8 * filters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cnn,
    Tcn,
    Dense,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Cnn => "2D CNN",
            Stage::Tcn => "TCN",
            Stage::Dense => "Dense",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacRow {
    pub stage: Stage,
    pub layer: String,
    pub macs: u64,
    pub comparisons: u64,
}

/// MACs per inference: the CNN runs once on the newest frame, the TCN and
/// classifier over all `T` steps. Pooling comparisons are kept apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacBreakdown {
    pub rows: Vec<MacRow>,
    pub cnn: u64,
    pub tcn: u64,
    pub dense: u64,
    pub total: u64,
    pub pool_comparisons: u64,
}

pub fn count_macs(net: &Network) -> Result<MacBreakdown> {
    let mut rows = Vec::new();
    let cnn_chain = net.cnn.shape_chain(&net.frame_shape())?;
    for (layer, input) in net.cnn.layers.iter().zip(&cnn_chain) {
        rows.push(MacRow {
            stage: Stage::Cnn,
            layer: layer.spec().kind.to_string(),
            macs: layer.macs(input)?,
            comparisons: layer.comparisons(input)?,
        });
    }
    let tcn_chain = net
        .tcn
        .shape_chain(&[net.config.time_steps, net.feature_width()])?;
    for (layer, input) in net.tcn.layers.iter().zip(&tcn_chain) {
        let stage = if matches!(layer, Layer::Dense(_)) || matches!(layer, Layer::Relu) {
            Stage::Dense
        } else {
            Stage::Tcn
        };
        rows.push(MacRow {
            stage,
            layer: layer.spec().kind.to_string(),
            macs: layer.macs(input)?,
            comparisons: 0,
        });
    }
    let sum = |s: Stage| {
        rows.iter()
            .filter(|r| r.stage == s)
            .map(|r| r.macs)
            .sum::<u64>()
    };
    let (cnn, tcn, dense) = (sum(Stage::Cnn), sum(Stage::Tcn), sum(Stage::Dense));
    let pool_comparisons = rows.iter().map(|r| r.comparisons).sum();
    Ok(MacBreakdown {
        rows,
        cnn,
        tcn,
        dense,
        total: cnn + tcn + dense,
        pool_comparisons,
    })
}

/// One row of a layer-architecture table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub layer: String,
    pub input: String,
    pub output: String,
    pub kernel: String,
    /// Padding for CNN rows, dilation for TCN rows.
    pub detail: String,
}

fn dims(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

impl Network {
    /// CNN rows in the style of a layer-architecture table (ReLUs omitted).
    pub fn cnn_table(&self) -> Result<Vec<LayerRow>> {
        let chain = self.cnn.shape_chain(&self.frame_shape())?;
        let mut rows = Vec::new();
        for (i, layer) in self.cnn.layers.iter().enumerate() {
            let spec = layer.spec();
            if spec.kind == LayerKind::ReLU {
                continue;
            }
            let (kernel, detail) = match spec.kind {
                LayerKind::Flatten => ("-".to_string(), "-".to_string()),
                _ => (
                    dims(&spec.kernel),
                    match spec.padding {
                        Padding::Same => "Same".to_string(),
                        Padding::Valid => "Valid".to_string(),
                    },
                ),
            };
            rows.push(LayerRow {
                layer: spec.kind.to_string(),
                input: dims(&chain[i]),
                output: dims(&chain[i + 1]),
                kernel,
                detail,
            });
        }
        Ok(rows)
    }

    /// TCN rows; each residual block expands to its convolution and its adding layer.
    pub fn tcn_table(&self) -> Result<Vec<LayerRow>> {
        let chain = self
            .tcn
            .shape_chain(&[self.config.time_steps, self.feature_width()])?;
        let mut rows = Vec::new();
        for (i, layer) in self.tcn.layers.iter().enumerate() {
            let spec = layer.spec();
            let (input, output) = (dims(&chain[i]), dims(&chain[i + 1]));
            match spec.kind {
                LayerKind::CausalConv1D => rows.push(LayerRow {
                    layer: spec.kind.to_string(),
                    input,
                    output,
                    kernel: spec.kernel[0].to_string(),
                    detail: "-".into(),
                }),
                LayerKind::ResidualBlock => {
                    rows.push(LayerRow {
                        layer: LayerKind::CausalConv1D.to_string(),
                        input: input.clone(),
                        output: output.clone(),
                        kernel: spec.kernel[0].to_string(),
                        detail: spec.dilation.to_string(),
                    });
                    rows.push(LayerRow {
                        layer: "Adding Layer".into(),
                        input: output.clone(),
                        output,
                        kernel: "-".into(),
                        detail: "-".into(),
                    });
                }
                LayerKind::Dense => rows.push(LayerRow {
                    layer: spec.kind.to_string(),
                    input,
                    output,
                    kernel: "-".into(),
                    detail: "-".into(),
                }),
                _ => {}
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_tinyradarnn, ModelConfig};

    #[test]
    fn eleven_gesture_param_counts() {
        let net = build_tinyradarnn(&ModelConfig::eleven_gesture(), 0).unwrap();
        let p = count_params(&net);
        assert_eq!(p.cnn, 496 + 7_712 + 14_400);
        assert_eq!(p.tcn, 12_320 + 6_240 + 2_112 + 2_080 + 363);
        assert_eq!(p.total, 22_608 + 23_115);
    }

    #[test]
    fn tcn_formula_cells() {
        assert_eq!(tcn_param_formula(TcnVariant::Proposed, 32), 6_240);
        assert_eq!(tcn_param_formula(TcnVariant::Proposed, 128), 98_688);
        assert_eq!(tcn_param_formula(TcnVariant::Original, 96), 111_168);
        assert_eq!(lstm_param_formula(32), 25_344);
        assert_eq!(lstm_param_formula(64), 99_840);
        assert_eq!(lstm_param_formula(128), 396_288);
    }

    #[test]
    fn formula_matches_built_blocks() {
        for f in [8, 16, 32, 64, 128] {
            let cfg = ModelConfig {
                tcn_filters: f,
                ..ModelConfig::eleven_gesture()
            };
            let net = build_tinyradarnn(&cfg, 0).unwrap();
            let blocks: usize = net
                .tcn
                .layers
                .iter()
                .filter(|l| matches!(l, Layer::Residual(_)))
                .map(|l| l.param_count())
                .sum();
            assert_eq!(
                blocks as u64,
                tcn_param_formula(TcnVariant::Proposed, f as u64)
            );
        }
    }

    #[test]
    fn residual_block_params_f32() {
        let net = build_tinyradarnn(&ModelConfig::eleven_gesture(), 0).unwrap();
        let block = net
            .tcn
            .layers
            .iter()
            .find(|l| matches!(l, Layer::Residual(_)))
            .unwrap();
        assert_eq!(block.param_count(), 2 * 32 * 32 + 32);
    }

    #[test]
    fn mac_breakdown() {
        let net = build_tinyradarnn(&ModelConfig::eleven_gesture(), 0).unwrap();
        let m = count_macs(&net).unwrap();
        assert_eq!(m.rows[0].macs, 32 * 492 * 16 * 3 * 5 * 2);
        assert_eq!(m.rows[0].macs, 7_557_120);
        assert_eq!(
            m.cnn,
            7_557_120 + 10 * 98 * 32 * 15 * 16 + 3 * 19 * 64 * 7 * 32
        );
        assert_eq!(m.tcn, 5 * (384 * 32 + 3 * 2 * 32 * 32));
        assert_eq!(m.dense, 22_240);
        assert_eq!(m.total, m.cnn + m.tcn + m.dense);
        assert!(m.pool_comparisons > 0);
    }
}
