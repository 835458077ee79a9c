//! TOML run configuration. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tinyradar::model::ModelConfig;
use tinyradar::radar_io::CorpusConfig;
use tinyradar::train::{Aggregation, TrainConfig};

use crate::error::CliError;

pub const DATA_DIR_ENV: &str = "TINYRADAR_DATA_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Where corpora, datasets and models live. Falls back to
    /// `$TINYRADAR_DATA_DIR`, then `./data`.
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub synth: SynthSection,
    pub eval: EvalSection,
    pub quantize: QuantizeSection,
}

/// A named preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `eleven-gesture`, `five-gesture`, `desk` or `toy`.
    pub preset: String,
    pub tw: Option<usize>,
    pub rp: Option<usize>,
    pub sensors: Option<usize>,
    pub classes: Option<usize>,
    pub tcn_filters: Option<usize>,
    pub time_steps: Option<usize>,
    pub dilations: Option<Vec<usize>>,
    pub cnn_channels: Option<[usize; 3]>,
    pub pool_kernels: Option<[[usize; 2]; 3]>,
    pub dense_units: Option<[usize; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "eleven-gesture".into(),
            tw: None,
            rp: None,
            sensors: None,
            classes: None,
            tcn_filters: None,
            time_steps: None,
            dilations: None,
            cnn_channels: None,
            pool_kernels: None,
            dense_units: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    /// Stratified 5-fold cross-validation.
    Cv5,
    /// Leave one user out.
    Loocv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub scheme: SplitScheme,
    pub fold: usize,
    pub held_out_user: u32,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            scheme: SplitScheme::Cv5,
            fold: 0,
            held_out_user: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub per_class: usize,
    pub sweeps: usize,
    pub range_points: usize,
    pub sweep_freq_hz: f64,
    pub noise_std: f64,
    pub users: u32,
    pub sessions: u32,
}

impl Default for SynthSection {
    fn default() -> Self {
        let c = CorpusConfig::default();
        Self {
            per_class: c.per_class,
            sweeps: c.sweeps,
            range_points: c.range_points,
            sweep_freq_hz: c.sweep_freq_hz,
            noise_std: c.noise_std,
            users: c.users,
            sessions: c.sessions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `mean-softmax` or `majority-vote`.
    pub aggregation: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            aggregation: "mean-softmax".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizeSection {
    /// Training sequences used to calibrate activation ranges.
    pub calibration_sequences: usize,
    pub activation_bits: usize,
}

impl Default for QuantizeSection {
    fn default() -> Self {
        Self {
            calibration_sequences: 64,
            activation_bits: 8,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fold: Option<usize>,
    pub held_out_user: Option<u32>,
    pub filters: Option<usize>,
    pub time_steps: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
    }

    /// Applies overrides, expands the model preset and validates everything.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(d) = &o.data_dir {
            self.data_dir = Some(d.clone());
        }
        if self.data_dir.is_none() {
            self.data_dir = Some(
                std::env::var_os(DATA_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("data")),
            );
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.fold.is_some() && o.held_out_user.is_some() {
            return Err(CliError::config(
                "--fold and --held-out-user are mutually exclusive",
            ));
        }
        if let Some(f) = o.fold {
            self.split.scheme = SplitScheme::Cv5;
            self.split.fold = f;
        }
        if let Some(u) = o.held_out_user {
            self.split.scheme = SplitScheme::Loocv;
            self.split.held_out_user = u;
        }
        if let Some(f) = o.filters {
            self.model.tcn_filters = Some(f);
        }
        if let Some(t) = o.time_steps {
            self.model.time_steps = Some(t);
        }
        let m = self.model_config()?;
        self.model = ModelSection {
            preset: self.model.preset.clone(),
            tw: Some(m.tw),
            rp: Some(m.rp),
            sensors: Some(m.sensors),
            classes: Some(m.classes),
            tcn_filters: Some(m.tcn_filters),
            time_steps: Some(m.time_steps),
            dilations: Some(m.dilations.clone()),
            cnn_channels: Some(m.cnn_channels),
            pool_kernels: Some(m.pool_kernels),
            dense_units: Some(m.dense_units),
        };
        self.train_config().validate()?;
        self.aggregation()?;
        if self.split.scheme == SplitScheme::Cv5 && self.split.fold >= 5 {
            return Err(CliError::config(format!(
                "fold {} out of range 0..5",
                self.split.fold
            )));
        }
        if self.quantize.activation_bits == 0 || self.quantize.calibration_sequences == 0 {
            return Err(CliError::config(
                "quantize.activation_bits and quantize.calibration_sequences must be positive",
            ));
        }
        Ok(self)
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let base = match m.preset.as_str() {
            "eleven-gesture" => ModelConfig::eleven_gesture(),
            "five-gesture" => ModelConfig::five_gesture(),
            "desk" => ModelConfig::desk(),
            "toy" => ModelConfig::toy(),
            other => return Err(CliError::config(format!("unknown model preset `{other}`"))),
        };
        let cfg = ModelConfig {
            tw: m.tw.unwrap_or(base.tw),
            rp: m.rp.unwrap_or(base.rp),
            sensors: m.sensors.unwrap_or(base.sensors),
            classes: m.classes.unwrap_or(base.classes),
            tcn_filters: m.tcn_filters.unwrap_or(base.tcn_filters),
            time_steps: m.time_steps.unwrap_or(base.time_steps),
            dilations: m.dilations.clone().unwrap_or(base.dilations),
            cnn_channels: m.cnn_channels.unwrap_or(base.cnn_channels),
            pool_kernels: m.pool_kernels.unwrap_or(base.pool_kernels),
            dense_units: m.dense_units.unwrap_or(base.dense_units),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: self.seed,
        }
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        let s = &self.synth;
        CorpusConfig {
            per_class: s.per_class,
            sweeps: s.sweeps,
            range_points: s.range_points,
            sweep_freq_hz: s.sweep_freq_hz,
            noise_std: s.noise_std,
            users: s.users,
            sessions: s.sessions,
            seed: self.seed,
            ..CorpusConfig::default()
        }
    }

    pub fn aggregation(&self) -> Result<Aggregation, CliError> {
        Ok(self.eval.aggregation.parse::<Aggregation>()?)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always serializable")
    }

    /// SHA-256 of the resolved config in canonical TOML form.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("sede = 3").is_err());
        assert!(RunConfig::parse("[model]\nfilters = 3").is_err());
        assert!(RunConfig::parse("[bogus]\nx = 1").is_err());
    }

    #[test]
    fn overrides_and_expansion() {
        let cfg = RunConfig::parse("[model]\npreset = \"desk\"\n").unwrap();
        let o = Overrides {
            data_dir: Some("d".into()),
            seed: Some(9),
            held_out_user: Some(3),
            filters: Some(8),
            ..Default::default()
        };
        let r = cfg.resolve(&o).unwrap();
        assert_eq!(r.seed, 9);
        assert_eq!(r.split.scheme, SplitScheme::Loocv);
        assert_eq!(r.split.held_out_user, 3);
        assert_eq!(r.model.tcn_filters, Some(8));
        assert_eq!(r.model.rp, Some(64));
        // the resolved form round-trips and hashes stably
        let again = RunConfig::parse(&r.to_toml()).unwrap();
        assert_eq!(again, r);
        assert_eq!(again.hash(), r.hash());
    }

    #[test]
    fn hash_tracks_content() {
        let o = Overrides {
            data_dir: Some("d".into()),
            ..Default::default()
        };
        let a = RunConfig::default().resolve(&o).unwrap();
        let b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        }
        .resolve(&o)
        .unwrap();
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation_errors() {
        let o = Overrides {
            data_dir: Some("d".into()),
            ..Default::default()
        };
        let bad = |text: &str| {
            RunConfig::parse(text)
                .unwrap()
                .resolve(&o)
                .unwrap_err()
                .code
        };
        assert_eq!(bad("[model]\npreset = \"huge\""), 2);
        assert_eq!(bad("[train]\nbatch_size = 0"), 2);
        assert_eq!(bad("[split]\nfold = 7"), 2);
        assert_eq!(bad("[eval]\naggregation = \"median\""), 2);
        let both = Overrides {
            fold: Some(1),
            held_out_user: Some(1),
            ..o
        };
        assert_eq!(RunConfig::default().resolve(&both).unwrap_err().code, 2);
    }
}
