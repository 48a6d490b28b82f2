use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uplift_core::dataset::{self, ColumnRoles};
use uplift_core::metrics::{self, MetricsReport};
use uplift_core::synthgen::{self, SynthConfig};
use uplift_core::{Error, UpliftModel};

use crate::error::{CliError, Result};
use crate::pipeline::{dataset_stats, DatasetStats, ToolInfo};

pub const DATASET_FILE: &str = "dataset.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub tool: ToolInfo,
    pub config: SynthConfig,
    pub stats: DatasetStats,
    pub treated_fraction: Option<f64>,
    pub mean_true_cate: f64,
    pub dataset_path: PathBuf,
    pub ground_truth_path: PathBuf,
}

/// Generates a dataset and writes it with its ground truth and a manifest.
pub fn cmd_synth(config: &SynthConfig, out_dir: &Path) -> Result<SynthManifest> {
    let generated = synthgen::generate(config)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let dataset_path = out_dir.join(DATASET_FILE);
    generated.dataset.write_csv(&dataset_path)?;
    let ground_truth_path = out_dir.join(GROUND_TRUTH_FILE);
    synthgen::export_ground_truth(&generated, &ground_truth_path)?;

    let stats = dataset_stats(&generated.dataset);
    let manifest = SynthManifest {
        tool: ToolInfo::current(),
        config: config.clone(),
        treated_fraction: stats.arm_stats.treated_fraction(),
        stats,
        mean_true_cate: generated.true_cate.iter().sum::<f64>() / generated.true_cate.len().max(1) as f64,
        dataset_path,
        ground_truth_path,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::to_writer_pretty(file, &manifest)?;
    Ok(manifest)
}

/// Writes `row_index,score`.
pub fn write_scores(path: &Path, scores: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = csv::Writer::from_writer(file);
    out.write_record(["row_index", "score"])?;
    for (i, s) in scores.iter().enumerate() {
        out.write_record(&[i.to_string(), s.to_string()])?;
    }
    out.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Reads one numeric column from a headed CSV file.
pub fn read_score_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MissingColumn(column.to_string()))?;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let raw = record.get(col).unwrap_or_default().trim();
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(Error::NonNumeric {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                }
                .into())
            }
        }
    }
    Ok(out)
}

/// Scores a dataset with a saved model; returns the number of rows written.
pub fn cmd_score(model_path: &Path, data_path: &Path, roles: &ColumnRoles, out_path: &Path) -> Result<usize> {
    let model = UpliftModel::load(model_path)?;
    let data = dataset::load_csv(data_path, roles)?;
    if data.n_features() != model.feature_names.len() {
        return Err(Error::WidthMismatch {
            expected: model.feature_names.len(),
            actual: data.n_features(),
        }
        .into());
    }
    if data.schema().names() != model.feature_names.as_slice() {
        log::warn!(
            "feature names differ from the model's: {:?} vs {:?}",
            data.schema().names(),
            model.feature_names
        );
    }
    let scores = model.predict_uplift(&data)?;
    write_scores(out_path, &scores)?;
    Ok(scores.len())
}

/// Evaluates scores against a labelled dataset and writes `report.json` and `curves.csv`.
pub fn cmd_evaluate(
    scores_path: &Path,
    score_column: &str,
    data_path: &Path,
    roles: &ColumnRoles,
    n_bins: usize,
    out_dir: &Path,
) -> Result<MetricsReport> {
    let scores = read_score_column(scores_path, score_column)?;
    let data = dataset::load_csv(data_path, roles)?;
    if scores.len() != data.len() {
        return Err(CliError::Input(format!(
            "{} scores for {} dataset rows",
            scores.len(),
            data.len()
        )));
    }
    let scored = metrics::scored_samples(&scores, &data)?;
    let report = metrics::evaluate(&scored, n_bins)?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let path = out_dir.join("report.json");
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::to_writer_pretty(file, &report)?;
    let path = out_dir.join("curves.csv");
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    metrics::write_curves_csv(file, &[("qini", &report.qini_curve), ("uplift", &report.uplift_curve)])?;
    Ok(report)
}
