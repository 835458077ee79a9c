use crate::error::{Error, Result};

/// Shape and size parameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Sweeps per frame.
    pub tw: usize,
    /// Range points per sweep.
    pub rp: usize,
    pub sensors: usize,
    pub classes: usize,
    /// TCN channel count after the pointwise compression.
    pub tcn_filters: usize,
    /// Frames per sequence.
    pub time_steps: usize,
    pub dilations: Vec<usize>,
    /// Output channels of the three CNN convolutions.
    pub cnn_channels: [usize; 3],
    /// `(kh, kw)` of the three max-pooling layers.
    pub pool_kernels: [[usize; 2]; 3],
    /// Hidden widths of the per-step classifier.
    pub dense_units: [usize; 2],
}

impl ModelConfig {
    /// Two sensors, 492 range points, 11 gestures.
    pub fn eleven_gesture() -> Self {
        Self {
            tw: 32,
            rp: 492,
            sensors: 2,
            classes: 11,
            tcn_filters: 32,
            time_steps: 5,
            dilations: vec![1, 2, 4],
            cnn_channels: [16, 32, 64],
            pool_kernels: [[3, 5], [3, 5], [1, 7]],
            dense_units: [64, 32],
        }
    }

    /// One sensor, 414 range points, 5 gestures.
    pub fn five_gesture() -> Self {
        Self {
            rp: 414,
            sensors: 1,
            classes: 5,
            ..Self::eleven_gesture()
        }
    }

    /// Reduced network for the 64-range-point synthetic corpus.
    pub fn desk() -> Self {
        Self {
            rp: 64,
            sensors: 1,
            classes: 5,
            tcn_filters: 16,
            cnn_channels: [8, 16, 32],
            pool_kernels: [[3, 5], [3, 5], [1, 2]],
            ..Self::eleven_gesture()
        }
    }

    /// Tiny network for gradient checks: 8 x 32 x 1 frames.
    pub fn toy() -> Self {
        Self {
            tw: 8,
            rp: 32,
            sensors: 1,
            classes: 3,
            tcn_filters: 4,
            time_steps: 5,
            dilations: vec![1, 2, 4],
            cnn_channels: [2, 3, 4],
            pool_kernels: [[2, 2], [2, 2], [1, 2]],
            dense_units: [6, 5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tw", self.tw),
            ("rp", self.rp),
            ("sensors", self.sensors),
            ("tcn_filters", self.tcn_filters),
            ("time_steps", self.time_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("{name} must be at least 1")));
        }
        if self.classes < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::Validation(format!(
                "dilations must be non-empty and >= 1: {:?}",
                self.dilations
            )));
        }
        if self.cnn_channels.contains(&0) || self.dense_units.contains(&0) {
            return Err(Error::Validation(
                "channel and unit counts must be at least 1".into(),
            ));
        }
        if self.pool_kernels.iter().flatten().any(|&k| k == 0) {
            return Err(Error::Validation(
                "pool kernels must be at least 1x1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::eleven_gesture()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for cfg in [
            ModelConfig::eleven_gesture(),
            ModelConfig::five_gesture(),
            ModelConfig::desk(),
            ModelConfig::toy(),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn rejects_degenerate() {
        assert!(ModelConfig {
            tcn_filters: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            time_steps: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            classes: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            dilations: vec![1, 0],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
