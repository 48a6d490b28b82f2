//! Treatment probabilities `p(x) = P(W = 1 | X = x)`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Bounds applied to externally supplied scores.
pub const SCORE_CLAMP: f64 = 1e-6;

/// Source of propensity values; every value lies strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PropensitySource {
    /// Randomized experiment with a uniform treatment probability.
    Constant { p: f64 },
    /// Per-row scores aligned to dataset rows.
    PerSample { scores: Vec<f64> },
}

impl PropensitySource {
    pub fn constant(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "constant propensity must lie in (0, 1), got {p}"
            )));
        }
        Ok(PropensitySource::Constant { p })
    }

    /// Accepts externally estimated scores, clamping them into
    /// `[SCORE_CLAMP, 1 - SCORE_CLAMP]`.
    pub fn per_sample(scores: Vec<f64>) -> Result<Self> {
        let mut clamped = 0usize;
        let mut out = Vec::with_capacity(scores.len());
        for (i, s) in scores.into_iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::InvalidParameter(format!("propensity score at row {i} is not finite")));
            }
            let c = s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            if c != s {
                clamped += 1;
            }
            out.push(c);
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} propensity scores into [{SCORE_CLAMP}, {}]", 1.0 - SCORE_CLAMP);
        }
        Ok(PropensitySource::PerSample { scores: out })
    }

    /// Propensity for a row; the constant source ignores the index.
    pub fn propensity_for(&self, row_index: usize) -> Result<f64> {
        match self {
            PropensitySource::Constant { p } => Ok(*p),
            PropensitySource::PerSample { scores } => {
                scores.get(row_index).copied().ok_or(Error::IndexOutOfBounds {
                    index: row_index,
                    len: scores.len(),
                })
            }
        }
    }

    /// Number of rows covered, `None` when the source covers any row.
    pub fn coverage(&self) -> Option<usize> {
        match self {
            PropensitySource::Constant { .. } => None,
            PropensitySource::PerSample { scores } => Some(scores.len()),
        }
    }

    /// Restricts per-row scores to the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        match self {
            PropensitySource::Constant { .. } => Ok(self.clone()),
            PropensitySource::PerSample { .. } => Ok(PropensitySource::PerSample {
                scores: indices
                    .iter()
                    .map(|&i| self.propensity_for(i))
                    .collect::<Result<_>>()?,
            }),
        }
    }
}

/// Marginal treatment probability `p = #{W = 1} / N`.
pub fn estimate_constant(dataset: &Dataset) -> Result<PropensitySource> {
    if dataset.is_empty() {
        return Err(Error::Propensity("dataset is empty".into()));
    }
    let treated = dataset.rows().iter().filter(|s| s.treated).count();
    if treated == 0 || treated == dataset.len() {
        return Err(Error::Propensity(format!(
            "both arms are required, found {treated} treated of {} rows",
            dataset.len()
        )));
    }
    Ok(PropensitySource::Constant {
        p: treated as f64 / dataset.len() as f64,
    })
}

/// Reads a propensity column from a headed CSV file.
pub fn load_scores(path: impl AsRef<Path>, column: &str) -> Result<PropensitySource> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MissingColumn(column.to_string()))?;
    let mut scores = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let raw = record.get(col).unwrap_or_default().trim();
        let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })?;
        scores.push(v);
    }
    PropensitySource::per_sample(scores)
}
