//! Target redefinitions that turn uplift estimation into ordinary supervised
//! learning, and the inverse map from model output back to an uplift score.
//!
//! | W | Y | class variable | transformed outcome | shifted transformed outcome |
//! |---|---|----------------|---------------------|-----------------------------|
//! | 1 | 1 | 1              | 1/p                 | (1-C)/p                     |
//! | 0 | 0 | 1              | 0                   | C/(1-p)                     |
//! | 1 | 0 | 0              | 0                   | -C/p                        |
//! | 0 | 1 | 0              | -1/(1-p)            | -(1-C)/(1-p)                |
//!
//! Both real-valued transforms have conditional expectation `τ(x)` under
//! unconfoundedness, for every constant `C`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::propensity::PropensitySource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// `Z = 1` iff `W = Y`; fit as a classification problem.
    ClassVariable,
    /// `Z* = Y (W - p) / (p (1 - p))`.
    TransformedOutcome,
    /// `(Y - C) (W - p) / (p (1 - p))`.
    ShiftedTransformedOutcome,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [
        TransformKind::ClassVariable,
        TransformKind::TransformedOutcome,
        TransformKind::ShiftedTransformedOutcome,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::ClassVariable => "class-variable",
            TransformKind::TransformedOutcome => "transformed-outcome",
            TransformKind::ShiftedTransformedOutcome => "shifted-transformed-outcome",
        }
    }

    /// Short mathematical symbol used in reports.
    pub fn symbol(self) -> &'static str {
        match self {
            TransformKind::ClassVariable => "Z",
            TransformKind::TransformedOutcome => "Z*",
            TransformKind::ShiftedTransformedOutcome => "Z*(C)",
        }
    }

    pub fn task_kind(self) -> TaskKind {
        match self {
            TransformKind::ClassVariable => TaskKind::Classification,
            _ => TaskKind::Regression,
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown transform `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// A transform together with its shift constant and propensity source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Shift constant `C`; only read by the shifted transform.
    pub shift: f64,
    pub propensity: PropensitySource,
}

impl TransformSpec {
    pub fn class_variable(propensity: PropensitySource) -> Self {
        Self {
            kind: TransformKind::ClassVariable,
            shift: 0.0,
            propensity,
        }
    }

    pub fn transformed_outcome(propensity: PropensitySource) -> Self {
        Self {
            kind: TransformKind::TransformedOutcome,
            shift: 0.0,
            propensity,
        }
    }

    /// Shifted transform with `C ∈ [0, 1]`; the endpoints are allowed with a warning.
    pub fn shifted(shift: f64, propensity: PropensitySource) -> Result<Self> {
        check_shift(shift)?;
        if shift == 0.0 || shift == 1.0 {
            log::warn!("shift constant C = {shift} lies on the boundary of [0, 1]");
        }
        Ok(Self {
            kind: TransformKind::ShiftedTransformedOutcome,
            shift,
            propensity,
        })
    }

    pub fn new(kind: TransformKind, shift: f64, propensity: PropensitySource) -> Result<Self> {
        match kind {
            TransformKind::ClassVariable => Ok(Self::class_variable(propensity)),
            TransformKind::TransformedOutcome => Ok(Self::transformed_outcome(propensity)),
            TransformKind::ShiftedTransformedOutcome => Self::shifted(shift, propensity),
        }
    }

    /// Shift constant as used by the transform (`None` unless shifted).
    pub fn shift_used(&self) -> Option<f64> {
        (self.kind == TransformKind::ShiftedTransformedOutcome).then_some(self.shift)
    }
}

fn check_shift(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!("shift constant must lie in [0, 1], got {c}")));
    }
    Ok(())
}

fn check_propensity(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("propensity must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// `Z = 1` when `W = Y`, else `0`.
#[inline]
pub fn class_transform(treated: bool, outcome: bool) -> bool {
    treated == outcome
}

/// `Y (W - p) / (p (1 - p))`.
pub fn transformed_outcome(outcome: bool, treated: bool, p: f64) -> Result<f64> {
    shifted_transformed_outcome(outcome, treated, p, 0.0)
}

/// `(Y - C) (W - p) / (p (1 - p))`.
pub fn shifted_transformed_outcome(outcome: bool, treated: bool, p: f64, shift: f64) -> Result<f64> {
    check_propensity(p)?;
    let y = f64::from(u8::from(outcome));
    let w = f64::from(u8::from(treated));
    Ok((y - shift) * (w - p) / (p * (1.0 - p)))
}

/// Transformed targets aligned with the rows of the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedTable {
    pub features: FeatureMatrix,
    pub feature_names: Vec<String>,
    pub targets: Vec<f64>,
    pub task_kind: TaskKind,
}

impl TransformedTable {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Writes `features..., target` for use by external learners.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("target");
        out.write_record(&header)?;
        for (row, target) in self.features.rows().zip(&self.targets) {
            let mut record: Vec<String> = row.iter().map(f64::to_string).collect();
            record.push(target.to_string());
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Applies the transform row by row.
pub fn apply(spec: &TransformSpec, dataset: &Dataset) -> Result<TransformedTable> {
    if let Some(n) = spec.propensity.coverage() {
        if n != dataset.len() {
            return Err(Error::Schema(format!(
                "propensity scores cover {n} rows, dataset has {}",
                dataset.len()
            )));
        }
    }
    let targets = dataset
        .rows()
        .iter()
        .enumerate()
        .map(|(i, s)| match spec.kind {
            TransformKind::ClassVariable => Ok(f64::from(u8::from(class_transform(s.treated, s.outcome)))),
            TransformKind::TransformedOutcome => {
                transformed_outcome(s.outcome, s.treated, spec.propensity.propensity_for(i)?)
            }
            TransformKind::ShiftedTransformedOutcome => {
                shifted_transformed_outcome(s.outcome, s.treated, spec.propensity.propensity_for(i)?, spec.shift)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformedTable {
        features: dataset.feature_matrix(),
        feature_names: dataset.schema().names().to_vec(),
        targets,
        task_kind: spec.kind.task_kind(),
    })
}

/// Maps a model prediction to an uplift estimate: `2P(Z = 1 | x) - 1` for the
/// class-variable transform, identity for the outcome transforms.
pub fn uplift_from_prediction(kind: TransformKind, raw: f64) -> Result<f64> {
    match kind {
        TransformKind::ClassVariable => {
            if !(0.0..=1.0).contains(&raw) {
                return Err(Error::InvalidParameter(format!(
                    "class-variable prediction must be a probability, got {raw}"
                )));
            }
            Ok(2.0 * raw - 1.0)
        }
        TransformKind::TransformedOutcome | TransformKind::ShiftedTransformedOutcome => Ok(raw),
    }
}
