//! Experiment configuration, read from a single TOML file.
//!
//! ```toml
//! output_dir = "runs/low"
//! seed = 7
//! repetitions = 5
//! test_fraction = 0.3
//! n_bins = 100
//!
//! [data]
//! source = "preset"        # or "synthetic" (inline generator keys) or "csv"
//! name = "table3-low"
//!
//! [[transforms]]
//! kind = "class-variable"
//!
//! [[transforms]]
//! kind = "shifted-transformed-outcome"
//! shift = ["response-rate", 0.25]   # one approach per value
//!
//! [learner]
//! n_trees = 100
//! max_depth = 3
//! ```
//!
//! Any scalar key may be overridden with a dotted `key=value` pair, e.g.
//! `learner.n_trees=50`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uplift_core::{ColumnRoles, SynthConfig, TrainConfig, TransformKind};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    /// Write fitted models next to each report.
    #[serde(default = "default_true")]
    pub write_models: bool,
    pub data: DataSource,
    pub transforms: Vec<TransformEntry>,
    #[serde(default)]
    pub learner: TrainConfig,
}

fn default_repetitions() -> usize {
    5
}

fn default_test_fraction() -> f64 {
    0.3
}

fn default_bins() -> usize {
    uplift_core::metrics::DEFAULT_BINS
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    /// A named generator preset; `seed` replaces the preset's seed when given.
    Preset {
        name: String,
        #[serde(default)]
        seed: Option<u64>,
    },
    Synthetic(SynthConfig),
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        roles: ColumnRoles,
    },
}

impl DataSource {
    /// Generator configuration for synthetic sources.
    pub fn synth_config(&self) -> Result<Option<SynthConfig>> {
        match self {
            DataSource::Preset { name, seed } => {
                let mut cfg = SynthConfig::preset(name).ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown preset `{name}` (available: {})",
                        SynthConfig::PRESETS.join(", ")
                    ))
                })?;
                if let Some(seed) = seed {
                    cfg.seed = *seed;
                }
                Ok(Some(cfg))
            }
            DataSource::Synthetic(cfg) => Ok(Some(cfg.clone())),
            DataSource::Csv { .. } => Ok(None),
        }
    }
}

/// Shift constant choice for the shifted transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSetting {
    Value(f64),
    Named(NamedShift),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedShift {
    /// Overall `P(Y = 1)` of the training split.
    ResponseRate,
}

impl Default for ShiftSetting {
    fn default() -> Self {
        ShiftSetting::Named(NamedShift::ResponseRate)
    }
}

impl ShiftSetting {
    pub fn resolve(self, train_response_rate: f64) -> f64 {
        match self {
            ShiftSetting::Value(c) => c,
            ShiftSetting::Named(NamedShift::ResponseRate) => train_response_rate,
        }
    }
}

impl fmt::Display for ShiftSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShiftSetting::Value(c) => write!(f, "{c}"),
            ShiftSetting::Named(NamedShift::ResponseRate) => f.write_str("response-rate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftList {
    One(ShiftSetting),
    Many(Vec<ShiftSetting>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformEntry {
    pub kind: TransformKind,
    /// Only read by the shifted transform; defaults to the response rate.
    #[serde(default)]
    pub shift: Option<ShiftList>,
}

/// One transform to train and evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approach {
    pub label: String,
    pub kind: TransformKind,
    pub shift: Option<ShiftSetting>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() {
            return Err(CliError::Config("at least one transform is required".into()));
        }
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.n_bins == 0 {
            return Err(CliError::Config("n_bins must be positive".into()));
        }
        for a in self.approaches() {
            if let Some(ShiftSetting::Value(c)) = a.shift {
                if !(0.0..=1.0).contains(&c) {
                    return Err(CliError::Config(format!("shift constant {c} lies outside [0, 1]")));
                }
            }
        }
        self.learner.validate()?;
        self.data.synth_config()?.map(|c| c.validate()).transpose()?;
        Ok(())
    }

    /// Expands shift sweeps into one approach per value, labelled uniquely.
    pub fn approaches(&self) -> Vec<Approach> {
        let mut out = Vec::new();
        for entry in &self.transforms {
            let shifts: Vec<Option<ShiftSetting>> = match entry.kind {
                TransformKind::ShiftedTransformedOutcome => match &entry.shift {
                    None => vec![Some(ShiftSetting::default())],
                    Some(ShiftList::One(s)) => vec![Some(*s)],
                    Some(ShiftList::Many(v)) => v.iter().copied().map(Some).collect(),
                },
                _ => vec![None],
            };
            for shift in shifts {
                let name = match shift {
                    Some(s) => format!("{}_c-{s}", entry.kind),
                    None => entry.kind.to_string(),
                };
                out.push(Approach {
                    label: format!("{:02}-{name}", out.len()),
                    kind: entry.kind,
                    shift,
                });
            }
        }
        out
    }
}

/// Applies `dotted.key=value`; the value is parsed as TOML, falling back to a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut current = table;
    for part in parents {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override path `{key}` crosses a non-table value")))?;
    }
    if matches!(current.get(*last), Some(toml::Value::Table(_) | toml::Value::Array(_))) {
        return Err(CliError::Config(format!("override `{key}` must target a scalar key")));
    }
    current.insert(last.to_string(), value);
    Ok(())
}
