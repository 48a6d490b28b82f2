//! Seeded synthetic uplift data with known per-row treatment effects.
//!
//! Features are i.i.d. standard normal and fall into three groups, in column
//! order: informative (drive the control response), irrelevant (no effect),
//! and uplift (drive the treatment effect). With `s(x)` the informative score
//! and `u(x)` the uplift score,
//!
//! ```text
//! p0(x) = sigmoid(a0 + s(x))
//! p1(x) = p0(x) + (1 - p0(x)) * sigmoid(a1 + u(x))
//! τ(x)  = p1(x) - p0(x) ≥ 0
//! ```
//!
//! The intercepts `a0` and `a1` are found by bisection so that the mean latent
//! probability in each arm hits the configured response rate. Outcomes are
//! drawn by systematic sampling within each arm: every `Y` is marginally
//! `Bernoulli(p_W(x))` while the arm's positive count stays within one of
//! the sum of its latent probabilities.

use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema, Sample};
use crate::error::{Error, Result};
use crate::sigmoid;

const INTERCEPT_BOUND: f64 = 30.0;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_per_arm: usize,
    pub n_informative: usize,
    pub n_irrelevant: usize,
    pub n_uplift: usize,
    /// Target `P(Y = 1 | W = 0)`.
    pub control_rate: f64,
    /// Target `P(Y = 1 | W = 1)`.
    pub treated_rate: f64,
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub calibration_tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-4
}

impl SynthConfig {
    pub const PRESETS: [&'static str; 3] = ["table3-high", "table3-low", "null-effect"];

    /// Named configurations: two arms of 10,000 rows with two informative,
    /// one irrelevant and two uplift features.
    pub fn preset(name: &str) -> Option<Self> {
        let (control_rate, treated_rate) = match name {
            "table3-high" => (0.3038, 0.5021),
            "table3-low" => (0.0553, 0.0784),
            "null-effect" => (0.3038, 0.3038),
            _ => return None,
        };
        Some(Self {
            n_per_arm: 10_000,
            n_informative: 2,
            n_irrelevant: 1,
            n_uplift: 2,
            control_rate,
            treated_rate,
            seed: 20_200_701,
            calibration_tolerance: default_tolerance(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_informative + self.n_irrelevant + self.n_uplift
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_per_arm == 0 {
            return bad("n_per_arm must be positive".into());
        }
        if self.n_informative == 0 || self.n_uplift == 0 {
            return bad("at least one informative and one uplift feature are required".into());
        }
        for (name, r) in [("control_rate", self.control_rate), ("treated_rate", self.treated_rate)] {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {r}"));
            }
        }
        if self.treated_rate < self.control_rate {
            return bad("treated_rate must be at least control_rate for positive-uplift data".into());
        }
        if self.calibration_tolerance.is_nan() || self.calibration_tolerance <= 0.0 {
            return bad("calibration_tolerance must be positive".into());
        }
        Ok(())
    }
}

/// Coefficients and intercepts of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub n_informative: usize,
    pub n_irrelevant: usize,
    pub base_coefficients: Vec<f64>,
    pub uplift_coefficients: Vec<f64>,
    pub control_intercept: f64,
    /// `None` when the treatment has no effect.
    pub uplift_intercept: Option<f64>,
}

impl GeneratorModel {
    fn base_score(&self, row: &[f64]) -> f64 {
        dot(&self.base_coefficients, &row[..self.n_informative])
    }

    fn uplift_score(&self, row: &[f64]) -> f64 {
        dot(&self.uplift_coefficients, &row[self.n_informative + self.n_irrelevant..])
    }

    /// `(p0(x), p1(x))` for one feature row.
    pub fn latent(&self, row: &[f64]) -> (f64, f64) {
        let p0 = sigmoid(self.control_intercept + self.base_score(row));
        let p1 = match self.uplift_intercept {
            Some(a1) => p0 + (1.0 - p0) * sigmoid(a1 + self.uplift_score(row)),
            None => p0,
        };
        (p0, p1)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A dataset together with its latent conversion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub dataset: Dataset,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub true_cate: Vec<f64>,
    pub model: GeneratorModel,
}

fn feature_names(config: &SynthConfig) -> Vec<String> {
    let group = |prefix: &'static str, n: usize| (0..n).map(move |i| format!("{prefix}_{i}"));
    group("informative", config.n_informative)
        .chain(group("irrelevant", config.n_irrelevant))
        .chain(group("uplift", config.n_uplift))
        .collect()
}

pub fn generate(config: &SynthConfig) -> Result<GeneratedDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.n_features();
    let n = 2 * config.n_per_arm;

    let base_coefficients: Vec<f64> = (0..config.n_informative)
        .map(|_| {
            let magnitude = rng.random_range(0.5..1.5);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let uplift_coefficients: Vec<f64> = (0..config.n_uplift).map(|_| rng.random_range(0.5..1.5)).collect();

    let mut treated: Vec<bool> = (0..n).map(|i| i >= config.n_per_arm).collect();
    treated.shuffle(&mut rng);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let mut model = GeneratorModel {
        n_informative: config.n_informative,
        n_irrelevant: config.n_irrelevant,
        base_coefficients,
        uplift_coefficients,
        control_intercept: 0.0,
        uplift_intercept: None,
    };

    let control_scores: Vec<f64> = features
        .iter()
        .zip(&treated)
        .filter(|(_, &w)| !w)
        .map(|(x, _)| model.base_score(x))
        .collect();
    model.control_intercept =
        calibrate_intercept(config.control_rate, &control_scores, config.calibration_tolerance)?;

    if config.treated_rate > config.control_rate {
        let treated_rows: Vec<(f64, f64)> = features
            .iter()
            .zip(&treated)
            .filter(|(_, &w)| w)
            .map(|(x, _)| (sigmoid(model.control_intercept + model.base_score(x)), model.uplift_score(x)))
            .collect();
        let mean_p1 = |a1: f64| {
            treated_rows
                .iter()
                .map(|&(p0, u)| p0 + (1.0 - p0) * sigmoid(a1 + u))
                .sum::<f64>()
                / treated_rows.len() as f64
        };
        model.uplift_intercept = Some(bisect_increasing(
            config.treated_rate,
            config.calibration_tolerance,
            mean_p1,
        )?);
    }

    let (p0, p1): (Vec<f64>, Vec<f64>) = features.iter().map(|x| model.latent(x)).unzip();
    let true_cate: Vec<f64> = p0.iter().zip(&p1).map(|(a, b)| b - a).collect();

    // Systematic sampling, one random start per arm.
    let starts = [rng.random::<f64>(), rng.random::<f64>()];
    let mut cumulative = [0.0f64; 2];
    let outcomes: Vec<bool> = treated
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let arm = usize::from(w);
            let p = if w { p1[i] } else { p0[i] };
            let before = (cumulative[arm] + starts[arm]).floor();
            cumulative[arm] += p;
            (cumulative[arm] + starts[arm]).floor() > before
        })
        .collect();

    let rows = features
        .into_iter()
        .zip(treated)
        .zip(outcomes)
        .map(|((x, w), y)| Sample::new(x, w, y))
        .collect();
    let dataset = Dataset::new(FeatureSchema::new(feature_names(config))?, rows)?;
    Ok(GeneratedDataset {
        dataset,
        p0,
        p1,
        true_cate,
        model,
    })
}

/// Intercept `a` with `mean(sigmoid(a + score))` within `tol` of `target_rate`,
/// by bisection over `[-30, 30]`.
pub fn calibrate_intercept(target_rate: f64, scores: &[f64], tol: f64) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::InvalidParameter(format!("target rate must lie in (0, 1), got {target_rate}")));
    }
    if scores.is_empty() {
        return Err(Error::Calibration("no scores to calibrate against".into()));
    }
    let n = scores.len() as f64;
    bisect_increasing(target_rate, tol, |a| scores.iter().map(|s| sigmoid(a + s)).sum::<f64>() / n)
}

fn bisect_increasing(target: f64, tol: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (mut lo, mut hi) = (-INTERCEPT_BOUND, INTERCEPT_BOUND);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo <= target + tol && target - tol <= f_hi) {
        return Err(Error::Calibration(format!(
            "target {target} is not bracketed by [{f_lo}, {f_hi}] over intercepts [{lo}, {hi}]"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let value = f(mid);
        if (value - target).abs() <= tol {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!("no intercept within {tol} of {target}")))
}

/// One row of a ground-truth file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub p0: f64,
    pub p1: f64,
    pub tau: f64,
}

/// Writes `p0,p1,tau` aligned with the dataset rows.
pub fn export_ground_truth(g: &GeneratedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(file);
    out.write_record(["p0", "p1", "tau"])?;
    for i in 0..g.p0.len() {
        out.write_record(&[g.p0[i].to_string(), g.p1[i].to_string(), g.true_cate[i].to_string()])?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
