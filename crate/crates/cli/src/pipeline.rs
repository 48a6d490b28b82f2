//! End-to-end comparison run: materialize data, split, then for every
//! approach transform, fit, score the test split and evaluate.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! manifest.json                 resolved config, per-repetition records, comparison
//! comparison.csv                one row per approach, sorted by median Qini coefficient
//! timing.json                   wall-clock durations (kept out of the manifest)
//! rep-<r>/<approach>/report.json
//! rep-<r>/<approach>/curves.csv
//! rep-<r>/<approach>/scores.csv
//! rep-<r>/<approach>/model.json
//! ```
//!
//! Every seed derives from the master seed and the repetition index, so
//! results do not depend on the order approaches are executed in.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uplift_core::dataset::{self, ArmStats, ColumnRoles, Dataset};
use uplift_core::metrics::{self, MetricsReport};
use uplift_core::propensity::{self, PropensitySource};
use uplift_core::synthgen::{self, GeneratedDataset};
use uplift_core::transforms::{self, class_transform, TransformSpec};
use uplift_core::{gbt, TrainConfig, UpliftModel};

use crate::config::{Approach, DataSource, ExperimentConfig};
use crate::error::{CliError, Result};

const SPLIT_STREAM: u64 = 1;
const LEARNER_STREAM: u64 = 2;
const DATA_STREAM: u64 = 3;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix(mix(master ^ mix(stream)) ^ index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Whole-dataset statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_rows: usize,
    pub arm_stats: ArmStats,
    /// Phi correlation between the class variable `Z` and `W`.
    pub phi_z_w: Option<f64>,
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let z: Vec<bool> = ds.rows().iter().map(|s| class_transform(s.treated, s.outcome)).collect();
    DatasetStats {
        n_rows: ds.len(),
        arm_stats: dataset::arm_stats(ds),
        phi_z_w: metrics::phi_correlation(&z, &ds.treatments()).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachRecord {
    pub label: String,
    pub transform: String,
    pub shift_setting: Option<String>,
    pub shift_constant: Option<f64>,
    pub status: String,
    pub error: Option<String>,
    pub qini_coefficient: Option<f64>,
    pub auuc: Option<f64>,
    pub report_path: Option<PathBuf>,
    pub curves_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub index: usize,
    pub data_seed: Option<u64>,
    pub split_seed: u64,
    pub learner_seed: u64,
    pub dataset_sha256: String,
    pub split_sha256: String,
    pub dataset: DatasetStats,
    pub n_train: usize,
    pub n_test: usize,
    pub train_response_rate: f64,
    pub propensity: String,
    /// Qini coefficient of the true effect on the test split (synthetic data only).
    pub oracle_qini_coefficient: Option<f64>,
    pub approaches: Vec<ApproachRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub transform: String,
    pub shift_setting: Option<String>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub qini_coefficient: Option<Summary>,
    pub auuc: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub config: ExperimentConfig,
    pub repetitions: Vec<RepetitionRecord>,
    /// Sorted by median Qini coefficient, descending; failed approaches last.
    pub comparison: Vec<ComparisonRow>,
}

impl RunManifest {
    pub fn comparison_row(&self, label: &str) -> Option<&ComparisonRow> {
        self.comparison.iter().find(|r| r.label == label)
    }
}

/// In-memory result of one run, including every report.
pub struct RunOutput {
    pub manifest: RunManifest,
    /// `reports[rep][approach]`, in config order; `None` for failed approaches.
    pub reports: Vec<Vec<Option<MetricsReport>>>,
}

struct Materialized {
    dataset: Dataset,
    generated: Option<GeneratedDataset>,
    propensity_scores: Option<PropensitySource>,
    data_seed: Option<u64>,
}

fn materialize(config: &ExperimentConfig, rep: usize) -> Result<Materialized> {
    match &config.data {
        DataSource::Csv { path, roles } => {
            let dataset = dataset::load_csv(path, roles)?;
            let propensity_scores = match &roles.propensity {
                Some(col) => Some(propensity::load_scores(path, col)?),
                None => None,
            };
            Ok(Materialized {
                dataset,
                generated: None,
                propensity_scores,
                data_seed: None,
            })
        }
        source => {
            let mut synth = source.synth_config()?.expect("non-csv sources are synthetic");
            if rep > 0 {
                synth.seed = derive_seed(synth.seed, DATA_STREAM, rep as u64);
            }
            let data_seed = synth.seed;
            let generated = synthgen::generate(&synth)?;
            Ok(Materialized {
                dataset: generated.dataset.clone(),
                generated: Some(generated),
                propensity_scores: None,
                data_seed: Some(data_seed),
            })
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn dataset_hash(ds: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    ds.write_csv_to(&mut buf, &ColumnRoles::default())?;
    Ok(sha256_hex(&buf))
}

fn split_hash(test: &[usize]) -> String {
    let text: Vec<String> = test.iter().map(usize::to_string).collect();
    sha256_hex(text.join(",").as_bytes())
}

struct ApproachContext<'a> {
    train: &'a Dataset,
    test: &'a Dataset,
    propensity: &'a PropensitySource,
    train_response_rate: f64,
    learner: TrainConfig,
    n_bins: usize,
    dir: PathBuf,
    write_models: bool,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Trains one approach and writes its artifacts.
fn run_approach(approach: &Approach, ctx: &ApproachContext<'_>) -> Result<(MetricsReport, ApproachRecord)> {
    let shift = approach.shift.map(|s| s.resolve(ctx.train_response_rate)).unwrap_or(0.0);
    let spec = TransformSpec::new(approach.kind, shift, ctx.propensity.clone())?;
    let table = transforms::apply(&spec, ctx.train)?;
    let booster = gbt::fit(&table, &ctx.learner)?;
    let model = UpliftModel::new(
        approach.kind,
        spec.shift_used(),
        ctx.train.schema().names().to_vec(),
        booster,
    )?;
    let scores = model.predict_uplift(ctx.test)?;
    let scored = metrics::scored_samples(&scores, ctx.test)?;
    let mut report = metrics::evaluate(&scored, ctx.n_bins)?;
    report.transform = Some(approach.kind.to_string());
    report.shift_constant = spec.shift_used();

    let dir = ctx.dir.join(&approach.label);
    create_dir(&dir)?;
    let report_path = dir.join("report.json");
    write_json(&report_path, &report)?;
    let curves_path = dir.join("curves.csv");
    let file = File::create(&curves_path).map_err(|e| CliError::io(&curves_path, e))?;
    metrics::write_curves_csv(file, &[("qini", &report.qini_curve), ("uplift", &report.uplift_curve)])?;
    crate::commands::write_scores(&dir.join("scores.csv"), &scores)?;
    let model_path = if ctx.write_models {
        let path = dir.join("model.json");
        model.save(&path)?;
        Some(path)
    } else {
        None
    };

    let record = ApproachRecord {
        label: approach.label.clone(),
        transform: approach.kind.to_string(),
        shift_setting: approach.shift.map(|s| s.to_string()),
        shift_constant: spec.shift_used(),
        status: "ok".into(),
        error: None,
        qini_coefficient: report.qini_coefficient,
        auuc: Some(report.auuc),
        report_path: Some(report_path),
        curves_path: Some(curves_path),
        model_path,
    };
    Ok((report, record))
}

fn failed_record(approach: &Approach, err: &CliError) -> ApproachRecord {
    ApproachRecord {
        label: approach.label.clone(),
        transform: approach.kind.to_string(),
        shift_setting: approach.shift.map(|s| s.to_string()),
        shift_constant: None,
        status: "error".into(),
        error: Some(format!("[{}] {err}", err.category())),
        qini_coefficient: None,
        auuc: None,
        report_path: None,
        curves_path: None,
        model_path: None,
    }
}

fn run_repetition(
    config: &ExperimentConfig,
    approaches: &[Approach],
    rep: usize,
) -> Result<(RepetitionRecord, Vec<Option<MetricsReport>>)> {
    let data = materialize(config, rep)?;
    let split_seed = derive_seed(config.seed, SPLIT_STREAM, rep as u64);
    let learner_seed = derive_seed(config.seed, LEARNER_STREAM, rep as u64);
    let idx = dataset::split_indices(&data.dataset, config.test_fraction, split_seed)?;
    let train = data.dataset.subset(&idx.train);
    let test = data.dataset.subset(&idx.test);
    let train_response_rate = train
        .response_rate()
        .ok_or_else(|| CliError::Input("training split is empty".into()))?;
    let propensity = match &data.propensity_scores {
        Some(scores) => scores.subset(&idx.train)?,
        None => propensity::estimate_constant(&train)?,
    };
    let propensity_desc = match &propensity {
        PropensitySource::Constant { p } => format!("constant p = {p}"),
        PropensitySource::PerSample { scores } => format!("per-sample ({} scores)", scores.len()),
    };

    let oracle_qini_coefficient = data.generated.as_ref().and_then(|g| {
        let tau: Vec<f64> = idx.test.iter().map(|&i| g.true_cate[i]).collect();
        let scored = metrics::scored_samples(&tau, &test).ok()?;
        metrics::qini_coefficient(&scored, config.n_bins).ok()
    });

    let rep_dir = config.output_dir.join(format!("rep-{rep}"));
    create_dir(&rep_dir)?;
    let ctx = ApproachContext {
        train: &train,
        test: &test,
        propensity: &propensity,
        train_response_rate,
        learner: TrainConfig {
            seed: learner_seed,
            ..config.learner.clone()
        },
        n_bins: config.n_bins,
        dir: rep_dir,
        write_models: config.write_models,
    };
    let results: Vec<(Option<MetricsReport>, ApproachRecord)> = approaches
        .par_iter()
        .map(|a| match run_approach(a, &ctx) {
            Ok((report, record)) => (Some(report), record),
            Err(e) => {
                log::error!("approach {} failed in repetition {rep}: {e}", a.label);
                (None, failed_record(a, &e))
            }
        })
        .collect();
    let (reports, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let record = RepetitionRecord {
        index: rep,
        data_seed: data.data_seed,
        split_seed,
        learner_seed,
        dataset_sha256: dataset_hash(&data.dataset)?,
        split_sha256: split_hash(&idx.test),
        dataset: dataset_stats(&data.dataset),
        n_train: train.len(),
        n_test: test.len(),
        train_response_rate,
        propensity: propensity_desc,
        oracle_qini_coefficient,
        approaches: records,
    };
    Ok((record, reports))
}

fn comparison(approaches: &[Approach], reps: &[RepetitionRecord]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = approaches
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let records: Vec<&ApproachRecord> = reps.iter().map(|r| &r.approaches[i]).collect();
            let qini: Vec<f64> = records.iter().filter_map(|r| r.qini_coefficient).collect();
            let auuc: Vec<f64> = records.iter().filter_map(|r| r.auuc).collect();
            let n_ok = records.iter().filter(|r| r.status == "ok").count();
            ComparisonRow {
                label: a.label.clone(),
                transform: a.kind.to_string(),
                shift_setting: a.shift.map(|s| s.to_string()),
                n_ok,
                n_failed: records.len() - n_ok,
                qini_coefficient: Summary::of(&qini),
                auuc: Summary::of(&auuc),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &ComparisonRow| r.qini_coefficient.as_ref().map(|s| s.median);
        match (key(a), key(b)) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.label.cmp(&b.label))
    });
    rows
}

fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = csv::Writer::from_writer(file);
    out.write_record([
        "label", "transform", "shift", "n_ok", "n_failed", "qini_median", "qini_mean", "qini_min", "qini_max",
        "auuc_median", "auuc_mean", "auuc_min", "auuc_max",
    ])?;
    let cells = |s: &Option<Summary>| -> [String; 4] {
        match s {
            Some(s) => [s.median, s.mean, s.min, s.max].map(|v| v.to_string()),
            None => Default::default(),
        }
    };
    for r in rows {
        let mut record = vec![
            r.label.clone(),
            r.transform.clone(),
            r.shift_setting.clone().unwrap_or_default(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
        ];
        record.extend(cells(&r.qini_coefficient));
        record.extend(cells(&r.auuc));
        out.write_record(&record)?;
    }
    out.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Runs the configured experiment and writes all artifacts.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    create_dir(&config.output_dir)?;
    let approaches = config.approaches();

    let mut timings = BTreeMap::new();
    let results: Vec<(RepetitionRecord, Vec<Option<MetricsReport>>, f64)> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let t = Instant::now();
            run_repetition(config, &approaches, rep).map(|(rec, reports)| (rec, reports, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;

    let mut repetitions = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for (rec, rep_reports, secs) in results {
        timings.insert(format!("rep-{}", rec.index), secs);
        repetitions.push(rec);
        reports.push(rep_reports);
    }
    let manifest = RunManifest {
        tool: ToolInfo::current(),
        config: config.clone(),
        comparison: comparison(&approaches, &repetitions),
        repetitions,
    };
    write_json(&config.output_dir.join("manifest.json"), &manifest)?;
    write_comparison_csv(&config.output_dir.join("comparison.csv"), &manifest.comparison)?;
    timings.insert("total".into(), started.elapsed().as_secs_f64());
    write_json(&config.output_dir.join("timing.json"), &timings)?;
    Ok(RunOutput { manifest, reports })
}
