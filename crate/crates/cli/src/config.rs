//! Key-value run configuration shared by every subcommand.
//!
//! A config file holds `key = value` lines (`#` starts a comment). The
//! optional `preset` key is applied before every other key wherever it
//! appears; command-line flags are applied last.

use std::fmt::Write as _;
use std::str::FromStr;

use grhd::dataset::parse_kv_lines;
use grhd::model::{ModelConfig, TrainConfig};
use grhd::DType;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Published layer widths.
    Default,
    /// Narrow layers for single-core runs.
    Desk,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Desk => "desk",
        }
    }

    fn model(self) -> ModelConfig {
        match self {
            Preset::Default => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        }
    }
}

impl FromStr for Preset {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "default" => Ok(Preset::Default),
            "desk" => Ok(Preset::Desk),
            _ => Err(CliError::Config(format!("unknown preset `{s}` (default|desk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    /// Negative log-softmax of the clip's own section.
    Nls,
    /// Mean cosine distance to the nearest training embeddings.
    Knn,
}

impl Scorer {
    pub fn as_str(self) -> &'static str {
        match self {
            Scorer::Nls => "nls",
            Scorer::Knn => "knn",
        }
    }
}

impl FromStr for Scorer {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "nls" => Ok(Scorer::Nls),
            "knn" => Ok(Scorer::Knn),
            _ => Err(CliError::Config(format!("unknown scorer `{s}` (nls|knn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    /// `train.seed` mirrors `seed` once one is set.
    pub train: TrainConfig,
    pub scorer: Scorer,
    pub p: f64,
    pub knn_k: usize,
    pub precision: DType,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Default,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            scorer: Scorer::Nls,
            p: 0.1,
            knn_k: 1,
            precision: DType::F32,
            seed: None,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("bad value `{v}` for `{key}`")))
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("bad value `{v}` for `{key}` (true|false)"))),
    }
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        Self {
            preset,
            model: preset.model(),
            ..Self::default()
        }
    }

    pub fn from_kv_text(text: &str) -> Result<Self, CliError> {
        let pairs = parse_kv_lines(text).map_err(CliError::Config)?;
        let mut seen = std::collections::BTreeSet::new();
        for (k, _) in &pairs {
            if !seen.insert(k.as_str()) {
                return Err(CliError::Config(format!("key `{k}` given twice")));
            }
        }
        let preset = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse()?,
            None => Preset::Default,
        };
        let mut cfg = Self::with_preset(preset);
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Sets one key. `preset` is rejected here: it would silently undo
    /// earlier keys.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "frame_size" => m.spectrogram.frame_size = num(key, v)?,
            "hop" => m.spectrogram.hop = num(key, v)?,
            "num_mels" => m.spectrogram.num_mels = num(key, v)?,
            "fmin" => m.spectrogram.fmin = num(key, v)?,
            "fmax" => m.spectrogram.fmax = if v == "none" { None } else { Some(num(key, v)?) },
            "log_floor" => m.spectrogram.log_floor = num(key, v)?,
            "temporal_channels" => m.temporal_channels = num(key, v)?,
            "block_channels" => {
                let parts: Vec<usize> = v
                    .split(',')
                    .map(|p| num(key, p.trim()))
                    .collect::<Result<_, _>>()?;
                m.block_channels = parts
                    .try_into()
                    .map_err(|_| CliError::Config(format!("`{key}` needs three widths, got `{v}`")))?;
            }
            "reversal_hidden" => m.reversal_hidden = num(key, v)?,
            "bn_eps" => m.bn_eps = num(key, v)?,
            "bn_momentum" => m.bn_momentum = num(key, v)?,
            "epochs" => t.epochs = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "lr" => t.lr = num(key, v)?,
            "alpha" => t.weights.alpha = num(key, v)?,
            "beta" => t.weights.beta = num(key, v)?,
            "gamma" => t.weights.gamma = num(key, v)?,
            "lambda_gain" => t.lambda_gain = num(key, v)?,
            "focal_gamma" => t.focal_gamma = num(key, v)?,
            "class_weighting" => t.class_weighting = flag(key, v)?,
            "seed" => {
                let s = num(key, v)?;
                self.seed = Some(s);
                t.seed = s;
            }
            "scorer" => self.scorer = v.parse()?,
            "p" => self.p = num(key, v)?,
            "knn_k" => self.knn_k = num(key, v)?,
            "precision" => {
                self.precision = match v {
                    "f32" => DType::F32,
                    "f64" => DType::F64,
                    _ => return Err(CliError::Config(format!("bad precision `{v}` (f32|f64)"))),
                }
            }
            "preset" => {
                return Err(CliError::Config("`preset` belongs in the config file".into()));
            }
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Checks everything that does not depend on the data; the model
    /// config waits for the clips' sample rate.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(CliError::Config(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if self.knn_k == 0 {
            return Err(CliError::Config("knn_k must be >= 1".into()));
        }
        Ok(())
    }

    /// One `key=value` line per setting, in a fixed order.
    pub fn echo(&self) -> String {
        let m = &self.model;
        let s = &m.spectrogram;
        let t = &self.train;
        let b = m.block_channels;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        line("preset", self.preset.as_str().into());
        line("frame_size", s.frame_size.to_string());
        line("hop", s.hop.to_string());
        line("num_mels", s.num_mels.to_string());
        line("fmin", s.fmin.to_string());
        line("fmax", s.fmax.map_or_else(|| "none".into(), |f| f.to_string()));
        line("log_floor", format!("{:e}", s.log_floor));
        line("temporal_channels", m.temporal_channels.to_string());
        line("block_channels", format!("{},{},{}", b[0], b[1], b[2]));
        line("reversal_hidden", m.reversal_hidden.to_string());
        line("bn_eps", format!("{:e}", m.bn_eps));
        line("bn_momentum", m.bn_momentum.to_string());
        line("epochs", t.epochs.to_string());
        line("batch_size", t.batch_size.to_string());
        line("lr", t.lr.to_string());
        line("alpha", t.weights.alpha.to_string());
        line("beta", t.weights.beta.to_string());
        line("gamma", t.weights.gamma.to_string());
        line("lambda_gain", t.lambda_gain.to_string());
        line("focal_gamma", t.focal_gamma.to_string());
        line("class_weighting", t.class_weighting.to_string());
        line("seed", self.seed.map_or_else(|| "none".into(), |s| s.to_string()));
        line("scorer", self.scorer.as_str().into());
        line("p", self.p.to_string());
        line("knn_k", self.knn_k.to_string());
        line("precision", self.precision.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_parses_back() {
        let mut cfg = RunConfig::with_preset(Preset::Desk);
        cfg.set("seed", "9").unwrap();
        cfg.set("fmax", "7000").unwrap();
        let text = cfg.echo().replace("seed=none\n", "");
        assert_eq!(RunConfig::from_kv_text(&text).unwrap(), cfg);
    }

    #[test]
    fn preset_applies_first() {
        let cfg = RunConfig::from_kv_text("temporal_channels = 5\npreset = desk\n").unwrap();
        assert_eq!(cfg.model.temporal_channels, 5);
        assert_eq!(cfg.model.block_channels, ModelConfig::desk().block_channels);
    }

    #[test]
    fn rejects_typos_and_duplicates() {
        assert!(RunConfig::from_kv_text("epoch = 3").is_err());
        assert!(RunConfig::from_kv_text("lr = 1\nlr = 2").is_err());
        assert!(RunConfig::from_kv_text("block_channels = 1,2").is_err());
        assert!(RunConfig::default().set("preset", "desk").is_err());
    }
}
