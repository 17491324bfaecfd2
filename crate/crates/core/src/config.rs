//! Flat `key = value` run configuration.
//!
//! Values come from defaults, then a config file, then command-line
//! overrides, each layer replacing the previous one. The fully resolved
//! form is written next to every run and parses back to the same config.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::graph::SplitRatios;
use crate::model::{ModelConfig, OrthMode, ThetaMode};
use crate::train::TrainConfig;

pub const RESOLVED_FILE: &str = "config.resolved";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?} set twice in one file")]
    Duplicate { key: String },
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub anchors: usize,
    pub model: ModelConfig,
    /// Restart probability used when `theta = ppr`.
    pub ppr_alpha: f64,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub split: SplitRatios,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            anchors: crate::walk::DEFAULT_MAX_ANCHORS,
            model: ModelConfig::default(),
            ppr_alpha: 0.15,
            epochs: t.epochs,
            patience: t.patience,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            split: SplitRatios::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    /// Every key in the order it is written out.
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "anchors",
        "hops",
        "hidden",
        "pos_hidden",
        "feat_hidden",
        "model_dim",
        "layers",
        "heads",
        "lambda_orth",
        "orth_mode",
        "theta",
        "ppr_alpha",
        "attention_cap",
        "dropout",
        "epochs",
        "patience",
        "learning_rate",
        "batch_size",
        "split_train",
        "split_val",
        "split_test",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let m = &mut self.model;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "anchors" => self.anchors = parse(key, value)?,
            "hops" => m.hops = parse(key, value)?,
            "hidden" => m.hidden = parse(key, value)?,
            "pos_hidden" => m.pos_hidden = parse(key, value)?,
            "feat_hidden" => m.feat_hidden = parse(key, value)?,
            "model_dim" => m.model_dim = parse(key, value)?,
            "layers" => m.layers = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "lambda_orth" => m.lambda_orth = parse(key, value)?,
            "orth_mode" => {
                m.orth_mode = match value {
                    "squared" => OrthMode::Squared,
                    "raw" => OrthMode::Raw,
                    _ => return Err(invalid(key, value, "expected squared or raw")),
                }
            }
            "theta" => {
                m.theta = match value {
                    "learnable" => ThetaMode::Learnable,
                    "ppr" => ThetaMode::Ppr { alpha: self.ppr_alpha },
                    _ => return Err(invalid(key, value, "expected learnable or ppr")),
                }
            }
            "ppr_alpha" => {
                self.ppr_alpha = parse(key, value)?;
                if let ThetaMode::Ppr { alpha } = &mut m.theta {
                    *alpha = self.ppr_alpha;
                }
            }
            "attention_cap" => m.attention_cap = parse(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "split_train" => self.split.train = parse(key, value)?,
            "split_val" => self.split.val = parse(key, value)?,
            "split_test" => self.split.test = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        Some(match key {
            "seed" => self.seed.to_string(),
            "anchors" => self.anchors.to_string(),
            "hops" => m.hops.to_string(),
            "hidden" => m.hidden.to_string(),
            "pos_hidden" => m.pos_hidden.to_string(),
            "feat_hidden" => m.feat_hidden.to_string(),
            "model_dim" => m.model_dim.to_string(),
            "layers" => m.layers.to_string(),
            "heads" => m.heads.to_string(),
            "lambda_orth" => m.lambda_orth.to_string(),
            "orth_mode" => match m.orth_mode {
                OrthMode::Squared => "squared".into(),
                OrthMode::Raw => "raw".into(),
            },
            "theta" => match m.theta {
                ThetaMode::Learnable => "learnable".into(),
                ThetaMode::Ppr { .. } => "ppr".into(),
            },
            "ppr_alpha" => self.ppr_alpha.to_string(),
            "attention_cap" => m.attention_cap.to_string(),
            "dropout" => m.dropout.to_string(),
            "epochs" => self.epochs.to_string(),
            "patience" => self.patience.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "split_train" => self.split.train.to_string(),
            "split_val" => self.split.val.to_string(),
            "split_test" => self.split.test.to_string(),
            _ => return None,
        })
    }

    /// Apply the lines of a config file on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { key: key.to_string() });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        self.merge_text(&text)
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(ConfigError::Syntax { line: 0, text: pair.to_string() });
        };
        self.set(key.trim(), value)
    }

    pub fn to_resolved(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("listed key"));
        }
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    /// Check every derived configuration up front.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |key: &str, reason: String| invalid(key, &self.get(key).unwrap_or_default(), &reason);
        self.model.validate().map_err(|e| wrap("model", e.to_string()))?;
        self.train_config().validate().map_err(|e| wrap("epochs", e.to_string()))?;
        if self.anchors == 0 {
            return Err(wrap("anchors", "must be positive".into()));
        }
        Ok(())
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue { key: key.to_string(), value: value.to_string(), reason: reason.to_string() }
}
