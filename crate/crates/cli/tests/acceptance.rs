//! Acceptance checks. Each test prints one `ACCEPTANCE <id> PASS|FAIL` line;
//! run with `--nocapture` to see them.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uplift_cli::config::{ShiftList, TransformEntry};
use uplift_cli::{DataSource, ExperimentConfig, ShiftSetting};
use uplift_core::gbt::{self, loss_gradient, LossKind, Node};
use uplift_core::metrics::{self, CurvePoint, ScoredSample};
use uplift_core::synthgen::{self, SynthConfig};
use uplift_core::transforms::{self, TaskKind, TransformKind};
use uplift_core::{Dataset, FeatureMatrix, FeatureSchema, Sample, TrainConfig, TransformedTable};

const TRANSFORM_TOL: f64 = 1e-12;
const PROPOSITION_SE: f64 = 3.0;
const PHI_TOL: f64 = 1e-3;
const RATE_TOL: f64 = 0.005;
const IDENTITY_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-9;
const NULL_QINI_TOL: f64 = 0.05;
const PERCENT_TOL: f64 = 5e-4;
/// Master seed of the Qini ordering runs, fixed before the first run.
const ORDERING_SEED: u64 = 20_200_701;
/// Z counts as markedly degraded when its median Qini is at most this share of Z*'s.
const MARKED_DEGRADATION: f64 = 0.8;

fn print_verdict(id: &str, title: &str, failures: &[String]) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {id} {status}: {title}");
    for f in failures {
        println!("    {f}");
    }
}

fn verdict(id: &str, title: &str, failures: &[String]) {
    print_verdict(id, title, failures);
    assert!(failures.is_empty(), "{id} failed: {failures:#?}");
}

fn cells(c00: usize, c01: usize, c10: usize, c11: usize) -> Dataset {
    let mut rows = Vec::with_capacity(c00 + c01 + c10 + c11);
    for (n, w, y) in [(c00, false, false), (c01, false, true), (c10, true, false), (c11, true, true)] {
        rows.extend((0..n).map(|_| Sample::new(vec![0.0], w, y)));
    }
    Dataset::new(FeatureSchema::new(vec!["x".into()]).unwrap(), rows).unwrap()
}

#[test]
fn c1_transform_tables() {
    let mut failures = Vec::new();
    for p in [0.25, 0.5, 0.75148] {
        for (w, y) in [(false, false), (false, true), (true, false), (true, true)] {
            let (wf, yf) = (f64::from(u8::from(w)), f64::from(u8::from(y)));
            let z = transforms::class_transform(w, y);
            if z != (w == y) {
                failures.push(format!("Z at W={wf} Y={yf}"));
            }
            // Closed forms: treated units divide by p, control by -(1 - p).
            let expected_star = if w { yf / p } else { -yf / (1.0 - p) };
            let star = transforms::transformed_outcome(y, w, p).unwrap();
            if (star - expected_star).abs() > TRANSFORM_TOL {
                failures.push(format!("Z* p={p} W={wf} Y={yf}: {star} vs {expected_star}"));
            }
            for c in [0.0, 0.3, 0.5, 1.0] {
                let expected = if w { (yf - c) / p } else { -(yf - c) / (1.0 - p) };
                let got = transforms::shifted_transformed_outcome(y, w, p, c).unwrap();
                if (got - expected).abs() > TRANSFORM_TOL {
                    failures.push(format!("Z^* p={p} C={c} W={wf} Y={yf}: {got} vs {expected}"));
                }
            }
        }
    }
    verdict("C1", "transform values match the closed forms for every W/Y cell", &failures);
}

#[test]
fn c2_shifted_target_is_unbiased_within_cells() {
    let config = SynthConfig {
        n_per_arm: 50_000,
        seed: 11,
        ..SynthConfig::preset("table3-high").unwrap()
    };
    let generated = synthgen::generate(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let truth_path = dir.path().join("truth.csv");
    synthgen::export_ground_truth(&generated, &truth_path).unwrap();
    let truth = synthgen::read_ground_truth(&truth_path).unwrap();

    let ds = &generated.dataset;
    let first_uplift = config.n_informative + config.n_irrelevant;
    let cell_of = |s: &Sample| {
        usize::from(s.features[first_uplift] > 0.0) * 2 + usize::from(s.features[first_uplift + 1] > 0.0)
    };
    let p = 0.5;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for c in [0.0, 0.25, 0.5, 0.75] {
        for cell in 0..4 {
            let members: Vec<usize> = (0..ds.len()).filter(|&i| cell_of(&ds.rows()[i]) == cell).collect();
            let n = members.len() as f64;
            let targets: Vec<f64> = members
                .iter()
                .map(|&i| {
                    let s = &ds.rows()[i];
                    transforms::shifted_transformed_outcome(s.outcome, s.treated, p, c).unwrap()
                })
                .collect();
            let mean = targets.iter().sum::<f64>() / n;
            let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let tau = members.iter().map(|&i| truth[i].tau).sum::<f64>() / n;
            let z = (mean - tau).abs() / se;
            worst = worst.max(z);
            if z > PROPOSITION_SE {
                failures.push(format!("C={c} cell {cell}: mean {mean:.5} vs tau {tau:.5} ({z:.2} SE)"));
            }
        }
    }
    println!("    N = {}, largest deviation {worst:.2} SE", ds.len());
    verdict("C2", "mean of the shifted target tracks the true effect in every cell", &failures);
}

fn pearson(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len() as f64;
    let x: Vec<f64> = a.iter().map(|&v| f64::from(u8::from(v))).collect();
    let y: Vec<f64> = b.iter().map(|&v| f64::from(u8::from(v))).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn c3_phi_from_published_arm_counts() {
    let mut failures = Vec::new();
    for (name, ds, expected) in [
        ("high", cells(6962, 3038, 4979, 5021), -0.198),
        ("low", cells(9447, 553, 9216, 784), -0.867),
    ] {
        let z: Vec<bool> = ds.rows().iter().map(|s| transforms::class_transform(s.treated, s.outcome)).collect();
        let w = ds.treatments();
        let phi = metrics::phi_correlation(&z, &w).unwrap();
        let oracle = pearson(&z, &w);
        println!("    {name}: phi {phi:.5}, oracle {oracle:.5}");
        if (phi - oracle).abs() > 1e-12 {
            failures.push(format!("{name}: phi {phi} disagrees with oracle {oracle}"));
        }
        if (phi - expected).abs() > PHI_TOL {
            failures.push(format!("{name}: phi {phi} vs {expected}"));
        }
    }
    verdict("C3", "phi(Z, W) reproduces -0.198 and -0.867", &failures);
}

#[test]
fn c4_presets_hit_arm_rates() {
    let mut failures = Vec::new();
    for name in SynthConfig::PRESETS {
        let config = SynthConfig::preset(name).unwrap();
        let ds = synthgen::generate(&config).unwrap().dataset;
        let stats = uplift_core::dataset::arm_stats(&ds);
        let (c, t) = (stats.control_rate().unwrap(), stats.treated_rate().unwrap());
        println!(
            "    {name}: control {c:.4} (target {}), treated {t:.4} (target {})",
            config.control_rate, config.treated_rate
        );
        if (c - config.control_rate).abs() > RATE_TOL || (t - config.treated_rate).abs() > RATE_TOL {
            failures.push(format!("{name}: rates {c:.4}/{t:.4}"));
        }
        if stats.control.unwrap().n != config.n_per_arm || stats.treated.unwrap().n != config.n_per_arm {
            failures.push(format!("{name}: arm sizes differ from {}", config.n_per_arm));
        }
    }
    verdict("C4", "generator presets land within 0.5 percentage points", &failures);
}

fn entry(kind: TransformKind, shift: Option<ShiftSetting>) -> TransformEntry {
    TransformEntry {
        kind,
        shift: shift.map(ShiftList::One),
    }
}

fn experiment(out: &Path, data: DataSource, seed: u64, repetitions: usize, transforms: Vec<TransformEntry>) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: out.to_path_buf(),
        seed,
        repetitions,
        test_fraction: 0.3,
        n_bins: metrics::DEFAULT_BINS,
        write_models: false,
        data,
        transforms,
        learner: TrainConfig::default(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Per-repetition Qini coefficients for Z, Z* and Z^* with C at the response rate.
fn ordering_run(preset: &str) -> [Vec<f64>; 3] {
    let dir = tempfile::tempdir().unwrap();
    let config = experiment(
        dir.path(),
        DataSource::Preset { name: preset.into(), seed: None },
        ORDERING_SEED,
        5,
        vec![
            entry(TransformKind::ClassVariable, None),
            entry(TransformKind::TransformedOutcome, None),
            entry(TransformKind::ShiftedTransformedOutcome, Some(ShiftSetting::default())),
        ],
    );
    let out = uplift_cli::run(&config).unwrap();
    let column = |a: usize| -> Vec<f64> {
        out.manifest
            .repetitions
            .iter()
            .map(|r| r.approaches[a].qini_coefficient.expect("approach succeeded"))
            .collect()
    };
    [column(0), column(1), column(2)]
}

#[test]
fn c5_qini_ordering_report_only() {
    let mut failures = Vec::new();

    let [z, star, shifted] = ordering_run("table3-low");
    let (mz, ms, mh) = (median(z.clone()), median(star.clone()), median(shifted.clone()));
    println!("    low: median Z {mz:.4}, Z* {ms:.4}, Z^*(C=r) {mh:.4}");
    println!("    low per rep: Z {z:.4?}\n                 Z* {star:.4?}\n                 Z^* {shifted:.4?}");
    if mh < ms {
        failures.push(format!("low: median Z^* {mh:.4} < median Z* {ms:.4}"));
    }
    if ms <= mz {
        failures.push(format!("low: median Z* {ms:.4} <= median Z {mz:.4}"));
    }
    if mz > MARKED_DEGRADATION * ms {
        failures.push(format!("low: median Z {mz:.4} is not markedly below Z* {ms:.4}"));
    }

    let [_, star, shifted] = ordering_run("table3-high");
    let wins = star.iter().zip(&shifted).filter(|(s, h)| h >= s).count();
    println!("    high: Z^* >= Z* in {wins}/5 repetitions (Z* {star:.4?}, Z^* {shifted:.4?})");
    if wins < 3 {
        failures.push(format!("high: Z^* >= Z* in only {wins}/5 repetitions"));
    }
    // A statistical outcome of one pre-declared seed: reported, not asserted,
    // so that a miss does not mask the remaining test targets.
    print_verdict("C5", "Qini ordering of the transforms over 5 seeded repetitions", &failures);
}

fn report_numbers(r: &uplift_core::MetricsReport) -> Vec<f64> {
    let curve = |c: &[CurvePoint]| c.iter().flat_map(|p| [p.fraction, p.value]).collect::<Vec<_>>();
    let mut v = vec![r.qini_coefficient.unwrap_or(f64::NAN), r.qini_area, r.auuc];
    v.extend(&r.cumulative_uplift_at_deciles);
    v.extend(curve(&r.qini_curve));
    v.extend(curve(&r.uplift_curve));
    v
}

fn read_scores(path: &Path) -> Vec<f64> {
    uplift_cli::commands::read_score_column(path, "score").unwrap()
}

#[test]
fn c6_zero_shift_reproduces_transformed_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let data = DataSource::Synthetic(SynthConfig {
        n_per_arm: 3_000,
        ..SynthConfig::preset("table3-high").unwrap()
    });
    let mut config = experiment(
        dir.path(),
        data,
        5,
        2,
        vec![
            entry(TransformKind::TransformedOutcome, None),
            entry(TransformKind::ShiftedTransformedOutcome, Some(ShiftSetting::Value(0.0))),
        ],
    );
    config.learner.n_trees = 40;
    config.learner.subsample = 0.8;
    let out = uplift_cli::run(&config).unwrap();
    let labels: Vec<String> = config.approaches().into_iter().map(|a| a.label).collect();

    let mut failures = Vec::new();
    let mut max_diff: f64 = 0.0;
    for (rep, reports) in out.reports.iter().enumerate() {
        let a = report_numbers(reports[0].as_ref().unwrap());
        let b = report_numbers(reports[1].as_ref().unwrap());
        let rep_dir = dir.path().join(format!("rep-{rep}"));
        let sa = read_scores(&rep_dir.join(&labels[0]).join("scores.csv"));
        let sb = read_scores(&rep_dir.join(&labels[1]).join("scores.csv"));
        if a.len() != b.len() || sa.len() != sb.len() {
            failures.push(format!("rep {rep}: output shapes differ"));
            continue;
        }
        for (x, y) in a.iter().zip(&b).chain(sa.iter().zip(&sb)) {
            max_diff = max_diff.max((x - y).abs());
        }
    }
    println!("    largest difference across reports and scores: {max_diff:e}");
    if max_diff > IDENTITY_TOL {
        failures.push(format!("difference {max_diff:e} exceeds {IDENTITY_TOL:e}"));
    }
    verdict("C6", "Z^* with C = 0 reproduces Z* end to end", &failures);
}

/// Prefix-count oracle written against the textbook definitions.
fn oracle_curves(pop: &[ScoredSample], order: &[usize], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let n = pop.len();
    let mut qini = Vec::new();
    let mut uplift = Vec::new();
    let mut carried = 0.0;
    for k in 0..=bins {
        let m = k * n / bins;
        let head: Vec<&ScoredSample> = order[..m].iter().map(|&i| &pop[i]).collect();
        let nt = head.iter().filter(|s| s.treated).count() as f64;
        let nc = head.iter().filter(|s| !s.treated).count() as f64;
        let nt1 = head.iter().filter(|s| s.treated && s.outcome).count() as f64;
        let nc1 = head.iter().filter(|s| !s.treated && s.outcome).count() as f64;
        qini.push(if nc > 0.0 { nt1 - nc1 * nt / nc } else { nt1 });
        if nt > 0.0 && nc > 0.0 {
            carried = nt1 / nt - nc1 / nc;
        }
        uplift.push(carried);
    }
    (qini, uplift)
}

fn trapezoid(values: &[f64]) -> f64 {
    let step = 1.0 / (values.len() - 1) as f64;
    values.windows(2).map(|w| 0.5 * step * (w[0] + w[1])).sum()
}

fn oracle_optimal_order(pop: &[ScoredSample]) -> Vec<usize> {
    let mut order = Vec::new();
    for (w, y) in [(true, true), (false, false), (true, false), (false, true)] {
        order.extend((0..pop.len()).filter(|&i| pop[i].treated == w && pop[i].outcome == y));
    }
    order
}

fn population(cells: &[(bool, bool)], scores: &[f64]) -> Vec<ScoredSample> {
    cells
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (&(treated, outcome), &score))| ScoredSample { score, treated, outcome, row_index: i })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Compares the library against the oracle for one population ranked by `order`.
fn check_against_oracle(cells: &[(bool, bool)], order: &[usize], bins: usize, failures: &mut Vec<String>) {
    let n = cells.len();
    let mut scores = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        scores[i] = (n - rank) as f64;
    }
    let pop = population(cells, &scores);
    let treated = cells.iter().filter(|c| c.0).count();
    let (qini, uplift) = oracle_curves(&pop, order, bins);
    if treated == 0 || treated == n {
        if metrics::qini_curve(&pop, bins).is_ok() {
            failures.push(format!("{cells:?}: single-arm population accepted"));
        }
        return;
    }
    let got_q: Vec<f64> = metrics::qini_curve(&pop, bins).unwrap().iter().map(|p| p.value).collect();
    let (got_u, auuc) = metrics::uplift_curve_and_auuc(&pop, bins).unwrap();
    let got_u: Vec<f64> = got_u.iter().map(|p| p.value).collect();
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= METRIC_TOL);
    if !close(&got_q, &qini) || !close(&got_u, &uplift) || (auuc - trapezoid(&uplift)).abs() > METRIC_TOL {
        failures.push(format!("{cells:?} order {order:?} bins {bins}: curves differ"));
        return;
    }
    let (optimal, _) = oracle_curves(&pop, &oracle_optimal_order(&pop), bins);
    let random = 0.5 * qini[bins];
    let denominator = trapezoid(&optimal) - random;
    match metrics::qini_coefficient(&pop, bins) {
        Ok(q) => {
            let expected = (trapezoid(&qini) - random) / denominator;
            if (q - expected).abs() > METRIC_TOL {
                failures.push(format!("{cells:?} order {order:?}: coefficient {q} vs {expected}"));
            }
        }
        Err(_) if denominator.abs() < METRIC_TOL => {}
        Err(e) => failures.push(format!("{cells:?}: unexpected error {e}")),
    }
}

#[test]
fn c7_metrics_match_brute_force() {
    let mut failures = Vec::new();
    let mut checked = 0usize;

    // Every population of up to 5 units under every ranking.
    for n in 1..=5usize {
        let perms = permutations(n);
        for code in 0..4usize.pow(n as u32) {
            let cells: Vec<(bool, bool)> = (0..n).map(|i| ((code >> (2 * i)) & 2 != 0, (code >> (2 * i)) & 1 != 0)).collect();
            for order in &perms {
                for bins in [n, 4] {
                    check_against_oracle(&cells, order, bins, &mut failures);
                    checked += 1;
                }
            }
        }
    }

    // Random populations of 6 to 12 units.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for n in 6..=12usize {
        for _ in 0..200 {
            let cells: Vec<(bool, bool)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let bins = [n, 5, 10][rng.random_range(0..3)];
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            check_against_oracle(&cells, &order, bins, &mut failures);
            checked += 1;
        }
    }
    // The outcome-aware ordering is a fixed normalizer, not the maximum of the
    // prefix-ratio gain: early control positives cost nothing while no treated
    // unit is in the prefix. Count how often some ranking exceeds it.
    let mut exceeded = 0;
    for _ in 0..40 {
        let cells: Vec<(bool, bool)> = (0..7).map(|_| (rng.random(), rng.random())).collect();
        let pop = population(&cells, &[0.0; 7]);
        let (optimal, _) = oracle_curves(&pop, &oracle_optimal_order(&pop), 7);
        let best = trapezoid(&optimal);
        exceeded += usize::from(
            permutations(7)
                .iter()
                .any(|order| trapezoid(&oracle_curves(&pop, order, 7).0) > best + METRIC_TOL),
        );
    }
    println!("    7-unit populations where some ranking exceeds the optimal curve: {exceeded}/40");

    // Tied scores fall back to ascending row index.
    for _ in 0..200 {
        let n = rng.random_range(2..=12usize);
        let cells: Vec<(bool, bool)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let pop = population(&cells, &scores);
        if metrics::rank(&pop) != order {
            failures.push(format!("tie order differs for scores {scores:?}"));
        }
    }

    // The optimal ranking scores exactly one.
    let ds = synthgen::generate(&SynthConfig { n_per_arm: 2_000, ..SynthConfig::preset("table3-low").unwrap() })
        .unwrap()
        .dataset;
    let cells_big: Vec<(bool, bool)> = ds.rows().iter().map(|s| (s.treated, s.outcome)).collect();
    let probe = population(&cells_big, &vec![0.0; cells_big.len()]);
    let mut scores = vec![0.0; cells_big.len()];
    for (rank, &i) in oracle_optimal_order(&probe).iter().enumerate() {
        scores[i] = -(rank as f64);
    }
    let q_opt = metrics::qini_coefficient(&population(&cells_big, &scores), 100).unwrap();
    if (q_opt - 1.0).abs() > METRIC_TOL {
        failures.push(format!("optimal ranking coefficient {q_opt}"));
    }

    // Random scores on null-effect data stay near zero.
    let null = synthgen::generate(&SynthConfig { n_per_arm: 10_000, ..SynthConfig::preset("null-effect").unwrap() })
        .unwrap()
        .dataset;
    let random: Vec<f64> = (0..null.len()).map(|_| rng.random()).collect();
    let q_null = metrics::qini_coefficient(&metrics::scored_samples(&random, &null).unwrap(), 100).unwrap();
    if q_null.abs() >= NULL_QINI_TOL {
        failures.push(format!("random scores on null data: {q_null}"));
    }
    println!("    {checked} oracle comparisons; optimal ranking {q_opt:.12}; null random {q_null:.4}");
    verdict("C7", "Qini and uplift curves match the brute-force oracle", &failures);
}

fn table(rows: Vec<Vec<f64>>, targets: Vec<f64>, task_kind: TaskKind) -> TransformedTable {
    let names = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
    TransformedTable {
        features: FeatureMatrix::from_rows(&rows).unwrap(),
        feature_names: names,
        targets,
        task_kind,
    }
}

fn random_table(seed: u64, n: usize, task_kind: TaskKind) -> TransformedTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| (rng.random_range(0..12) as f64) / 4.0).collect())
        .collect();
    let targets = rows
        .iter()
        .map(|r| {
            let signal = r[0] - r[1] * r[2] + rng.random_range(-0.5..0.5);
            match task_kind {
                TaskKind::Regression => signal,
                TaskKind::Classification => f64::from(u8::from(signal > 0.0)),
            }
        })
        .collect();
    table(rows, targets, task_kind)
}

/// Exhaustive search over every feature and midpoint for the best root split.
fn oracle_root_split(t: &TransformedTable, base: f64, lambda: f64, min_leaf: usize) -> Option<(usize, f64, f64)> {
    let grads: Vec<f64> = t.targets.iter().map(|y| base - y).collect();
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let g_all: f64 = grads.iter().sum();
    let n = grads.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..t.features.n_cols() {
        let mut values: Vec<f64> = (0..t.len()).map(|i| t.features.get(i, j)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let threshold = 0.5 * (pair[0] + pair[1]);
            let left: Vec<usize> = (0..t.len()).filter(|&i| t.features.get(i, j) < threshold).collect();
            if left.len() < min_leaf || t.len() - left.len() < min_leaf {
                continue;
            }
            let gl: f64 = left.iter().map(|&i| grads[i]).sum();
            let hl = left.len() as f64;
            let gain = score(gl, hl) + score(g_all - gl, n - hl) - score(g_all, n);
            if best.is_none_or(|(_, _, b)| gain > b + 1e-12) {
                best = Some((j, threshold, gain));
            }
        }
    }
    best
}

fn within_thread_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn c8_learner_correctness() {
    let mut failures = Vec::new();

    // Analytic gradients against central finite differences.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for loss in [LossKind::SquaredError, LossKind::Logistic] {
        for _ in 0..20 {
            let pred = rng.random_range(-4.0..4.0);
            let target = match loss {
                LossKind::SquaredError => rng.random_range(-3.0..3.0),
                LossKind::Logistic => f64::from(u8::from(rng.random::<bool>())),
            };
            let (g, h) = loss_gradient(loss, pred, target);
            let eps = 1e-5;
            let fd_g = (loss.loss(pred + eps, target) - loss.loss(pred - eps, target)) / (2.0 * eps);
            let fd_h = (loss_gradient(loss, pred + eps, target).0 - loss_gradient(loss, pred - eps, target).0) / (2.0 * eps);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-3);
            if rel(g, fd_g) > 1e-6 || rel(h, fd_h) > 1e-6 {
                failures.push(format!("{loss:?} at ({pred}, {target}): ({g}, {h}) vs ({fd_g}, {fd_h})"));
            }
        }
    }

    // Root split against exhaustive search.
    for seed in 0..10 {
        let t = random_table(seed, 60, TaskKind::Regression);
        let base = 0.25;
        let config = TrainConfig {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            min_samples_leaf: 3,
            base_score: Some(base),
            ..TrainConfig::default()
        };
        let model = gbt::fit(&t, &config).unwrap();
        let expected = oracle_root_split(&t, base, config.lambda, config.min_samples_leaf);
        match (&model.trees[0].nodes[0], expected) {
            (Node::Split { feature, threshold, gain, .. }, Some((f, th, g))) => {
                if *feature != f || (*threshold - th).abs() > 1e-12 || (*gain - g).abs() > 1e-9 * g.abs().max(1.0) {
                    failures.push(format!("seed {seed}: split ({feature}, {threshold}, {gain}) vs ({f}, {th}, {g})"));
                }
            }
            (node, expected) => failures.push(format!("seed {seed}: root {node:?} vs {expected:?}")),
        }
    }

    // Training loss never increases with default settings.
    for (kind, seed) in [(TaskKind::Regression, 1), (TaskKind::Classification, 2)] {
        let t = random_table(seed, 400, kind);
        let (_, history) = gbt::fit_with_history(&t, &TrainConfig { n_trees: 50, ..TrainConfig::default() }).unwrap();
        if history.len() != 51 || history.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            failures.push(format!("{kind:?}: loss history not monotone"));
        }
    }

    // Identical models regardless of thread count.
    let t = random_table(3, 2_000, TaskKind::Regression);
    let config = TrainConfig { n_trees: 30, subsample: 0.7, seed: 9, ..TrainConfig::default() };
    let reference = within_thread_pool(1, || gbt::fit(&t, &config).unwrap());
    for threads in [2, 4, 8] {
        let model = within_thread_pool(threads, || gbt::fit(&t, &config).unwrap());
        if model != reference {
            failures.push(format!("{threads} threads produced a different model"));
        }
    }
    verdict("C8", "learner gradients, split search, loss descent and determinism", &failures);
}

#[test]
fn c9_real_data_count_arithmetic() {
    let (treated, control) = (26_470usize, 80_042usize);
    let total = treated + control;
    let mut failures = Vec::new();
    let p = uplift_core::propensity::estimate_constant(&cells(control - 480, 480, treated - 261, 261)).unwrap();
    let p = p.propensity_for(0).unwrap();
    let stats = uplift_core::dataset::arm_stats(&cells(control - 480, 480, treated - 261, 261));
    for (name, got, expected) in [
        ("P(W = 1)", 100.0 * p, 24.852),
        ("control rate", 100.0 * stats.control_rate().unwrap(), 0.5997),
        ("treated rate", 100.0 * stats.treated_rate().unwrap(), 0.9860),
    ] {
        println!("    {name}: {got:.4}% (expected {expected}%)");
        if (got - expected).abs() > PERCENT_TOL * expected.max(1.0) {
            failures.push(format!("{name}: {got} vs {expected}"));
        }
    }
    if total != 106_512 {
        failures.push(format!("total {total}"));
    }
    verdict("C9", "propensity and arm rates of the real-data counts", &failures);
}
