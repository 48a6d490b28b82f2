//! The `(Y, W, X)` data model: feature schema, samples, CSV ingestion,
//! stratified train/test splits and per-arm response statistics.
//!
//! Row order is stable everywhere; the row index is the deterministic
//! tie-breaker used by ranking and splitting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, unique feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        let mut seen = HashSet::with_capacity(names.len());
        for name in &names {
            if name.is_empty() {
                return Err(Error::Schema("feature names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One unit: features, treatment indicator `W` and binary outcome `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub treated: bool,
    pub outcome: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, treated: bool, outcome: bool) -> Self {
        Self {
            features,
            treated,
            outcome,
        }
    }

    /// `W` as 0.0 / 1.0.
    #[inline]
    pub fn w(&self) -> f64 {
        f64::from(u8::from(self.treated))
    }

    /// `Y` as 0.0 / 1.0.
    #[inline]
    pub fn y(&self) -> f64 {
        f64::from(u8::from(self.outcome))
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::Schema(format!(
                "matrix buffer holds {} values, expected {n_rows} x {n_cols}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Schema(format!(
                    "row {i} has {} features, expected {n_cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(values, rows.len(), n_cols)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }
}

/// Names of the treatment, outcome and (optionally) feature columns in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnRoles {
    pub treatment: String,
    pub outcome: String,
    /// Explicit feature columns; `None` means every column not claimed by another role.
    pub features: Option<Vec<String>>,
    /// Column holding externally supplied propensity scores, excluded from features.
    pub propensity: Option<String>,
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            treatment: "treatment".into(),
            outcome: "outcome".into(),
            features: None,
            propensity: None,
        }
    }
}

impl ColumnRoles {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            ..Self::default()
        }
    }
}

/// An immutable collection of samples sharing one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Sample>) -> Result<Self> {
        let k = schema.len();
        for (i, row) in rows.iter().enumerate() {
            if row.features.len() != k {
                return Err(Error::Schema(format!(
                    "row {i} has {} features, schema declares {k}",
                    row.features.len()
                )));
            }
            if let Some(j) = row.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumeric {
                    row: i,
                    column: schema.names()[j].clone(),
                    value: row.features[j].to_string(),
                });
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.rows.iter().map(|s| s.treated).collect()
    }

    pub fn outcomes(&self) -> Vec<bool> {
        self.rows.iter().map(|s| s.outcome).collect()
    }

    pub fn feature_matrix(&self) -> FeatureMatrix {
        let k = self.n_features();
        let mut values = Vec::with_capacity(self.len() * k);
        for row in &self.rows {
            values.extend_from_slice(&row.features);
        }
        FeatureMatrix {
            values,
            n_rows: self.len(),
            n_cols: k,
        }
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Overall response rate `P(Y = 1)`; `None` for an empty dataset.
    pub fn response_rate(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let positives = self.rows.iter().filter(|s| s.outcome).count();
        Some(positives as f64 / self.len() as f64)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file, &ColumnRoles::default())
    }

    /// Writes features followed by the treatment and outcome columns.
    pub fn write_csv_to<W: Write>(&self, writer: W, roles: &ColumnRoles) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.names().iter().map(String::as_str).collect();
        header.push(&roles.treatment);
        header.push(&roles.outcome);
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in &self.rows {
            record.clear();
            record.extend(row.features.iter().map(|v| v.to_string()));
            record.push(u8::from(row.treated).to_string());
            record.push(u8::from(row.outcome).to_string());
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Loads a dataset from a headed CSV file with column roles declared by name.
pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, roles)
}

pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty("CSV input has no header row".into()));
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let w_col = find(&roles.treatment)?;
    let y_col = find(&roles.outcome)?;
    let p_col = roles.propensity.as_deref().map(find).transpose()?;

    let feature_cols: Vec<usize> = match &roles.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != w_col && i != y_col && Some(i) != p_col)
            .collect(),
    };
    let schema = FeatureSchema::new(feature_cols.iter().map(|&i| headers[i].to_string()).collect())?;

    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let binary = |col: usize| -> Result<bool> {
            match record.get(col).map(str::trim) {
                Some("0") => Ok(false),
                Some("1") => Ok(true),
                other => Err(Error::NonBinary {
                    row,
                    column: headers[col].to_string(),
                    value: other.unwrap_or_default().to_string(),
                }),
            }
        };
        let treated = binary(w_col)?;
        let outcome = binary(y_col)?;
        let mut features = Vec::with_capacity(feature_cols.len());
        for &col in &feature_cols {
            let raw = record.get(col).unwrap_or_default().trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        row,
                        column: headers[col].to_string(),
                        value: raw.to_string(),
                    })
                }
            }
        }
        rows.push(Sample {
            features,
            treated,
            outcome,
        });
    }
    Ok(Dataset { schema, rows })
}

/// Row indices of a stratified holdout split, each list in ascending row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratifies jointly on `(W, Y)`. The test size is `round(n * test_fraction)`,
/// apportioned over the non-empty cells by largest remainder so each cell's
/// test count is within one row of its exact share.
pub fn split_indices(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }

    // Cells in fixed order (W, Y) = (0,0), (0,1), (1,0), (1,1).
    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, s) in dataset.rows().iter().enumerate() {
        cells[usize::from(s.treated) * 2 + usize::from(s.outcome)].push(i);
    }

    let total_test = (dataset.len() as f64 * test_fraction).round() as usize;
    let shares: Vec<f64> = cells.iter().map(|c| c.len() as f64 * test_fraction).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..4).filter(|&c| !cells[c].is_empty()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(total_test.saturating_sub(assigned)) {
        counts[c] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(dataset.len() - total_test);
    let mut test = Vec::with_capacity(total_test);
    for (cell, &n_test) in cells.iter_mut().zip(&counts) {
        cell.shuffle(&mut rng);
        test.extend_from_slice(&cell[..n_test]);
        train.extend_from_slice(&cell[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Stratified holdout split returning `(train, test)`.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(dataset, test_fraction, seed)?;
    Ok((dataset.subset(&idx.train), dataset.subset(&idx.test)))
}

/// Counts for one treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n: usize,
    pub n_pos: usize,
    pub response_rate: f64,
}

impl ArmSummary {
    pub fn from_counts(n: usize, n_pos: usize) -> Self {
        debug_assert!(n_pos <= n && n > 0);
        Self {
            n,
            n_pos,
            response_rate: n_pos as f64 / n as f64,
        }
    }
}

/// Per-arm response statistics. An arm with no rows is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub control: Option<ArmSummary>,
    pub treated: Option<ArmSummary>,
}

impl ArmStats {
    pub fn total(&self) -> usize {
        self.control.map_or(0, |a| a.n) + self.treated.map_or(0, |a| a.n)
    }

    /// `r = P(Y = 1 | W = 0)`.
    pub fn control_rate(&self) -> Option<f64> {
        self.control.map(|a| a.response_rate)
    }

    /// `r + Δr = P(Y = 1 | W = 1)`.
    pub fn treated_rate(&self) -> Option<f64> {
        self.treated.map(|a| a.response_rate)
    }

    /// `Δr`, the difference in response rates.
    pub fn uplift(&self) -> Option<f64> {
        Some(self.treated_rate()? - self.control_rate()?)
    }

    /// Share of treated rows.
    pub fn treated_fraction(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.treated.map_or(0, |a| a.n) as f64 / total as f64)
    }
}

pub fn arm_stats(dataset: &Dataset) -> ArmStats {
    let mut n = [0usize; 2];
    let mut pos = [0usize; 2];
    for s in dataset.rows() {
        let arm = usize::from(s.treated);
        n[arm] += 1;
        pos[arm] += usize::from(s.outcome);
    }
    let summary = |arm: usize| (n[arm] > 0).then(|| ArmSummary::from_counts(n[arm], pos[arm]));
    ArmStats {
        control: summary(0),
        treated: summary(1),
    }
}
