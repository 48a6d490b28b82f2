//! Uplift evaluation over a ranked population.
//!
//! Units are ranked by descending predicted uplift (ties by ascending row
//! index). For the top `m` ranked units let `N_t, N_c` be the arm sizes and
//! `n_t1, n_c1` the arm positives. Curves are evaluated on the fixed grid
//! `φ = k / n_bins` with `m = floor(φ N)`:
//!
//! * Qini: `g(φ) = n_t1 - n_c1 N_t / N_c`. The control term is zero while
//!   `N_c = 0`, since `n_c1 ≤ N_c` vanishes with it.
//! * Cumulative uplift: `u(φ) = n_t1 / N_t - n_c1 / N_c`. While either arm is
//!   empty the last computable value is carried forward (starting from 0).
//!
//! The Qini coefficient is `(A - R) / (A* - R)` where `A` is the trapezoidal
//! area under the model's Qini curve, `R = g(1) / 2` the area under the random
//! line, and `A*` the area of the optimal ranking: treated positives, control
//! negatives, treated negatives, control positives. AUUC is the unnormalized
//! trapezoidal area under `u`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{ArmStats, ArmSummary, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub treated: bool,
    pub outcome: bool,
    pub row_index: usize,
}

/// Pairs scores with dataset rows; `row_index` is the dataset row.
pub fn scored_samples(scores: &[f64], dataset: &Dataset) -> Result<Vec<ScoredSample>> {
    if scores.len() != dataset.len() {
        return Err(Error::Schema(format!(
            "{} scores for {} dataset rows",
            scores.len(),
            dataset.len()
        )));
    }
    scores
        .iter()
        .zip(dataset.rows())
        .enumerate()
        .map(|(i, (&score, s))| {
            if !score.is_finite() {
                return Err(Error::InvalidParameter(format!("score at row {i} is not finite")));
            }
            Ok(ScoredSample {
                score,
                treated: s.treated,
                outcome: s.outcome,
                row_index: i,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub value: f64,
}

/// Positions of `scored` ordered by descending score, ties by ascending row index.
pub fn rank(scored: &[ScoredSample]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .score
            .total_cmp(&scored[a].score)
            .then(scored[a].row_index.cmp(&scored[b].row_index))
    });
    order
}

/// Order of the optimal (outcome-aware) ranking.
fn optimal_order(scored: &[ScoredSample]) -> Vec<usize> {
    let group = |s: &ScoredSample| match (s.treated, s.outcome) {
        (true, true) => 0,
        (false, false) => 1,
        (true, false) => 2,
        (false, true) => 3,
    };
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by_key(|&i| (group(&scored[i]), scored[i].row_index));
    order
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    n_t: usize,
    n_t1: usize,
    n_c: usize,
    n_c1: usize,
}

impl Counts {
    fn qini(&self) -> f64 {
        let gain = self.n_t1 as f64;
        if self.n_c == 0 {
            gain
        } else {
            gain - self.n_c1 as f64 * self.n_t as f64 / self.n_c as f64
        }
    }

    fn uplift(&self) -> Option<f64> {
        (self.n_t > 0 && self.n_c > 0)
            .then(|| self.n_t1 as f64 / self.n_t as f64 - self.n_c1 as f64 / self.n_c as f64)
    }
}

/// Cumulative counts after each prefix length `0..=N` of `order`.
fn prefix_counts(scored: &[ScoredSample], order: &[usize]) -> Vec<Counts> {
    let mut out = Vec::with_capacity(order.len() + 1);
    let mut c = Counts::default();
    out.push(c);
    for &i in order {
        let s = &scored[i];
        if s.treated {
            c.n_t += 1;
            c.n_t1 += usize::from(s.outcome);
        } else {
            c.n_c += 1;
            c.n_c1 += usize::from(s.outcome);
        }
        out.push(c);
    }
    out
}

fn grid(n: usize, n_bins: usize) -> impl Iterator<Item = (f64, usize)> {
    (0..=n_bins).map(move |k| (k as f64 / n_bins as f64, k * n / n_bins))
}

fn check_inputs(scored: &[ScoredSample], n_bins: usize) -> Result<()> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be positive".into()));
    }
    let treated = scored.iter().filter(|s| s.treated).count();
    if treated == 0 || treated == scored.len() {
        return Err(Error::UndefinedMetric(format!(
            "both arms are required, found {treated} treated of {} units",
            scored.len()
        )));
    }
    Ok(())
}

fn qini_from_prefix(prefix: &[Counts], n_bins: usize) -> Vec<CurvePoint> {
    let n = prefix.len() - 1;
    grid(n, n_bins)
        .map(|(fraction, m)| CurvePoint {
            fraction,
            value: prefix[m].qini(),
        })
        .collect()
}

fn uplift_from_prefix(prefix: &[Counts], n_bins: usize) -> Vec<CurvePoint> {
    let n = prefix.len() - 1;
    let mut last = 0.0;
    grid(n, n_bins)
        .map(|(fraction, m)| {
            if let Some(u) = prefix[m].uplift() {
                last = u;
            }
            CurvePoint { fraction, value: last }
        })
        .collect()
}

/// Trapezoidal area under a curve.
pub fn area(curve: &[CurvePoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[1].fraction - w[0].fraction) * (w[0].value + w[1].value))
        .sum()
}

pub fn qini_curve(scored: &[ScoredSample], n_bins: usize) -> Result<Vec<CurvePoint>> {
    check_inputs(scored, n_bins)?;
    Ok(qini_from_prefix(&prefix_counts(scored, &rank(scored)), n_bins))
}

/// Qini curve of the outcome-aware optimal ranking.
pub fn optimal_qini_curve(scored: &[ScoredSample], n_bins: usize) -> Result<Vec<CurvePoint>> {
    check_inputs(scored, n_bins)?;
    Ok(qini_from_prefix(&prefix_counts(scored, &optimal_order(scored)), n_bins))
}

fn coefficient(model: &[CurvePoint], optimal: &[CurvePoint]) -> Result<f64> {
    let terminal = model.last().map_or(0.0, |p| p.value);
    let random = 0.5 * terminal;
    let numerator = area(model) - random;
    let denominator = area(optimal) - random;
    let scale = area(optimal).abs().max(random.abs()).max(1.0);
    if denominator.abs() <= 1e-12 * scale {
        return Err(Error::UndefinedMetric(
            "optimal Qini area equals the random baseline".into(),
        ));
    }
    Ok(numerator / denominator)
}

pub fn qini_coefficient(scored: &[ScoredSample], n_bins: usize) -> Result<f64> {
    coefficient(&qini_curve(scored, n_bins)?, &optimal_qini_curve(scored, n_bins)?)
}

/// Cumulative uplift curve and its area (AUUC).
pub fn uplift_curve_and_auuc(scored: &[ScoredSample], n_bins: usize) -> Result<(Vec<CurvePoint>, f64)> {
    check_inputs(scored, n_bins)?;
    let curve = uplift_from_prefix(&prefix_counts(scored, &rank(scored)), n_bins);
    let auuc = area(&curve);
    Ok((curve, auuc))
}

/// `u(φ)` at `φ = 0.1, 0.2, …, 1.0`.
pub fn cumulative_uplift_at_deciles(scored: &[ScoredSample]) -> Result<Vec<f64>> {
    let (curve, _) = uplift_curve_and_auuc(scored, 10)?;
    Ok(curve[1..].iter().map(|p| p.value).collect())
}

/// Pearson correlation of two binary vectors.
pub fn phi_correlation(z: &[bool], w: &[bool]) -> Result<f64> {
    if z.len() != w.len() {
        return Err(Error::InvalidParameter(format!(
            "vectors differ in length: {} vs {}",
            z.len(),
            w.len()
        )));
    }
    let n = z.len() as f64;
    let n_z = z.iter().filter(|&&v| v).count() as f64;
    let n_w = w.iter().filter(|&&v| v).count() as f64;
    let n_zw = z.iter().zip(w).filter(|(&a, &b)| a && b).count() as f64;
    let denominator = (n_z * (n - n_z) * n_w * (n - n_w)).sqrt();
    if denominator == 0.0 {
        return Err(Error::UndefinedMetric("phi correlation of a constant vector".into()));
    }
    Ok((n * n_zw - n_z * n_w) / denominator)
}

fn arm_stats_of(scored: &[ScoredSample]) -> ArmStats {
    let c = prefix_counts(scored, &(0..scored.len()).collect::<Vec<_>>())[scored.len()];
    ArmStats {
        control: (c.n_c > 0).then(|| ArmSummary::from_counts(c.n_c, c.n_c1)),
        treated: (c.n_t > 0).then(|| ArmSummary::from_counts(c.n_t, c.n_t1)),
    }
}

/// Full evaluation of one scored population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub transform: Option<String>,
    pub shift_constant: Option<f64>,
    pub n_rows: usize,
    pub n_bins: usize,
    /// `None` when the normalization is undefined; see `warnings`.
    pub qini_coefficient: Option<f64>,
    pub qini_area: f64,
    pub auuc: f64,
    pub cumulative_uplift_at_deciles: Vec<f64>,
    pub arm_stats: ArmStats,
    pub conventions: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub qini_curve: Vec<CurvePoint>,
    pub uplift_curve: Vec<CurvePoint>,
}

pub fn conventions() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "qini_coefficient".to_string(),
            "(area(model) - g(1)/2) / (area(optimal) - g(1)/2), trapezoidal".to_string(),
        ),
        (
            "qini_curve".to_string(),
            "g = n_t1 - n_c1 * N_t / N_c, counts in the top floor(phi * N) ranked rows".to_string(),
        ),
        (
            "auuc".to_string(),
            "unnormalized trapezoidal area of u = n_t1/N_t - n_c1/N_c".to_string(),
        ),
        ("ranking".to_string(), "descending score, ties by ascending row index".to_string()),
    ])
}

pub fn evaluate(scored: &[ScoredSample], n_bins: usize) -> Result<MetricsReport> {
    let qini = qini_curve(scored, n_bins)?;
    let optimal = optimal_qini_curve(scored, n_bins)?;
    let (uplift, auuc) = uplift_curve_and_auuc(scored, n_bins)?;
    let mut warnings = Vec::new();
    let qini_coefficient = match coefficient(&qini, &optimal) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    Ok(MetricsReport {
        transform: None,
        shift_constant: None,
        n_rows: scored.len(),
        n_bins,
        qini_coefficient,
        qini_area: area(&qini),
        auuc,
        cumulative_uplift_at_deciles: cumulative_uplift_at_deciles(scored)?,
        arm_stats: arm_stats_of(scored),
        conventions: conventions(),
        warnings,
        qini_curve: qini,
        uplift_curve: uplift,
    })
}

/// Writes curves as `fraction,value,series`.
pub fn write_curves_csv<W: Write>(writer: W, series: &[(&str, &[CurvePoint])]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["fraction", "value", "series"])?;
    for (name, curve) in series {
        for p in *curve {
            out.write_record(&[p.fraction.to_string(), p.value.to_string(), name.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
