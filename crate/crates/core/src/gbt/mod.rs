//! Second-order gradient-boosted regression trees.
//!
//! Squared error is used for real-valued targets and the logistic loss for
//! binary targets. Trees are grown level-wise by exact greedy search over
//! midpoints between sorted unique feature values, with Newton leaf weights
//! `-G / (H + λ)`.

mod grow;
mod loss;
mod tree;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{loss_gradient, LossKind};
pub use tree::{Node, RegressionTree};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::transforms::{TaskKind, TransformedTable};
use crate::logit;
use grow::{grow_tree, GrowParams, SortedColumns};

/// Probabilities are kept in `[EPS, 1 - EPS]` when deriving the logistic base score.
const BASE_RATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split to be kept.
    pub min_split_gain: f64,
    /// Overrides the data-derived base score (raw, pre-link scale).
    pub base_score: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            subsample: 1.0,
            lambda: 1.0,
            min_split_gain: 0.0,
            base_score: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if self.max_depth > 30 {
            return bad(format!("max_depth {} exceeds the supported 30", self.max_depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must lie in (0, 1], got {}", self.subsample));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be a non-negative number, got {}", self.lambda));
        }
        if self.min_split_gain.is_nan() || self.min_split_gain < 0.0 {
            return bad(format!("min_split_gain must be non-negative, got {}", self.min_split_gain));
        }
        if self.base_score.is_some_and(|b| !b.is_finite()) {
            return bad("base_score must be finite".into());
        }
        Ok(())
    }
}

/// A fitted ensemble: `raw(x) = base_score + learning_rate * Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub loss: LossKind,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

impl GbtModel {
    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    /// Raw scores for squared error, probabilities for the logistic loss.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.n_cols() != self.n_features {
            return Err(Error::WidthMismatch {
                expected: self.n_features,
                actual: features.n_cols(),
            });
        }
        Ok(features
            .rows()
            .map(|row| self.loss.transform(self.predict_raw_row(row)))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::ModelFormat("base score and learning rate must be finite".into()));
        }
        for (i, tree) in self.trees.iter().enumerate() {
            tree.validate(self.n_features)
                .map_err(|e| Error::ModelFormat(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }
}

fn loss_for(task: TaskKind) -> LossKind {
    match task {
        TaskKind::Classification => LossKind::Logistic,
        TaskKind::Regression => LossKind::SquaredError,
    }
}

pub fn fit(table: &TransformedTable, config: &TrainConfig) -> Result<GbtModel> {
    fit_with_history(table, config).map(|(model, _)| model)
}

/// Fits a model and returns the mean training loss before boosting and after
/// every round (`n_trees + 1` values).
pub fn fit_with_history(table: &TransformedTable, config: &TrainConfig) -> Result<(GbtModel, Vec<f64>)> {
    config.validate()?;
    if table.is_empty() {
        return Err(Error::Empty("cannot fit on an empty table".into()));
    }
    let x = &table.features;
    let y = &table.targets;
    if x.n_rows() != y.len() {
        return Err(Error::Schema(format!(
            "{} feature rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(format!("target at row {i} is not finite")));
    }
    let loss = loss_for(table.task_kind);
    if loss == LossKind::Logistic {
        if let Some(i) = y.iter().position(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::InvalidParameter(format!(
                "logistic loss requires binary targets, row {i} has {}",
                y[i]
            )));
        }
    }

    let n = y.len();
    let base_score = config.base_score.unwrap_or_else(|| {
        let mean = y.iter().sum::<f64>() / n as f64;
        match loss {
            LossKind::SquaredError => mean,
            LossKind::Logistic => logit(mean.clamp(BASE_RATE_EPS, 1.0 - BASE_RATE_EPS)),
        }
    });

    let sorted = SortedColumns::new(x);
    let params = GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        lambda: config.lambda,
        min_split_gain: config.min_split_gain,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_sampled = ((n as f64 * config.subsample).round() as usize).clamp(1, n);

    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut active = vec![true; n];
    let mut history = Vec::with_capacity(config.n_trees + 1);
    history.push(loss.mean_loss(&raw, y));
    let mut trees = Vec::with_capacity(config.n_trees);

    for _ in 0..config.n_trees {
        for i in 0..n {
            (grad[i], hess[i]) = loss_gradient(loss, raw[i], y[i]);
        }
        if n_sampled < n {
            active.fill(false);
            for i in sample(&mut rng, n, n_sampled) {
                active[i] = true;
            }
        }
        let tree = grow_tree(x, &sorted, &grad, &hess, &active, &params);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += config.learning_rate * tree.predict_row(x.row(i));
        }
        history.push(loss.mean_loss(&raw, y));
        trees.push(tree);
    }

    Ok((
        GbtModel {
            loss,
            base_score,
            learning_rate: config.learning_rate,
            n_features: x.n_cols(),
            trees,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(rows: Vec<Vec<f64>>, targets: Vec<f64>, task_kind: TaskKind) -> TransformedTable {
        let k = rows[0].len();
        TransformedTable {
            features: FeatureMatrix::from_rows(&rows).unwrap(),
            feature_names: (0..k).map(|i| format!("f{i}")).collect(),
            targets,
            task_kind,
        }
    }

    fn random_table(seed: u64, n: usize, k: usize) -> TransformedTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect())
            .collect();
        let targets = rows
            .iter()
            .map(|r| r[0].sin() + 0.5 * r[k - 1] + rng.random_range(-0.5..0.5))
            .collect();
        table(rows, targets, TaskKind::Regression)
    }

    #[test]
    fn constant_target_is_absorbed_by_base_score() {
        let t = table((0..50).map(|i| vec![i as f64, (i % 7) as f64]).collect(), vec![0.7; 50], TaskKind::Regression);
        let model = fit(&t, &TrainConfig::default()).unwrap();
        assert_eq!(model.trees.len(), 100);
        for p in model.predict(&t.features).unwrap() {
            assert!((p - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_features_give_leaf_only_trees() {
        let t = table(vec![vec![1.0]; 40], (0..40).map(|i| i as f64).collect(), TaskKind::Regression);
        let model = fit(&t, &TrainConfig { n_trees: 5, ..TrainConfig::default() }).unwrap();
        assert_eq!(model.trees.len(), 5);
        assert!(model.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn step_function_split_near_zero() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 - 49.5) / 10.0]).collect();
        let targets: Vec<f64> = rows.iter().map(|r| if r[0] < 0.0 { 0.0 } else { 1.0 }).collect();
        let t = table(rows, targets.clone(), TaskKind::Regression);
        let cfg = TrainConfig {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            min_samples_leaf: 1,
            ..TrainConfig::default()
        };
        let model = fit(&t, &cfg).unwrap();
        let Node::Split { threshold, .. } = model.trees[0].nodes[0] else {
            panic!("expected a split");
        };
        assert!(threshold.abs() < 0.1, "threshold {threshold}");
        let preds = model.predict(&t.features).unwrap();
        let mse: f64 = preds.iter().zip(&targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / 100.0;
        assert!(mse < 0.25, "mse {mse} not below target variance 0.25");
    }

    #[test]
    fn xor_is_learned_with_logistic_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let labels: Vec<f64> = rows.iter().map(|r| f64::from(u8::from((r[0] > 0.0) != (r[1] > 0.0)))).collect();
        let t = table(rows, labels.clone(), TaskKind::Classification);
        let cfg = TrainConfig {
            n_trees: 30,
            max_depth: 2,
            learning_rate: 0.3,
            min_samples_leaf: 5,
            ..TrainConfig::default()
        };
        let probs = fit(&t, &cfg).unwrap().predict(&t.features).unwrap();
        let correct = probs.iter().zip(&labels).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count();
        assert!(correct as f64 / 400.0 > 0.95, "accuracy {}", correct as f64 / 400.0);
    }

    #[test]
    fn logistic_rejects_non_binary_targets() {
        let t = table(vec![vec![0.0], vec![1.0]], vec![0.0, 0.5], TaskKind::Classification);
        assert!(matches!(fit(&t, &TrainConfig::default()), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn empty_table_rejected() {
        let t = TransformedTable {
            features: FeatureMatrix::new(vec![], 0, 1).unwrap(),
            feature_names: vec!["f0".into()],
            targets: vec![],
            task_kind: TaskKind::Regression,
        };
        assert!(matches!(fit(&t, &TrainConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn base_only_and_zero_tree_models() {
        let model = GbtModel {
            loss: LossKind::Logistic,
            base_score: 0.3,
            learning_rate: 0.1,
            n_features: 2,
            trees: vec![],
        };
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![5.0, -2.0]]).unwrap();
        for p in model.predict(&x).unwrap() {
            assert!((p - crate::sigmoid(0.3)).abs() < 1e-15);
        }
        let regression = GbtModel { loss: LossKind::SquaredError, ..model };
        assert_eq!(regression.predict(&x).unwrap(), [0.3, 0.3]);
        let narrow = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(regression.predict(&narrow), Err(Error::WidthMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn depth_zero_leaf_is_mean_residual() {
        let t = random_table(3, 60, 2);
        let cfg = TrainConfig {
            n_trees: 1,
            max_depth: 0,
            learning_rate: 1.0,
            lambda: 0.0,
            base_score: Some(0.25),
            ..TrainConfig::default()
        };
        let model = fit(&t, &cfg).unwrap();
        let mean_residual = t.targets.iter().map(|y| y - 0.25).sum::<f64>() / 60.0;
        let Node::Leaf { value } = model.trees[0].nodes[0] else {
            panic!("depth-0 tree must be a leaf");
        };
        assert!((value - mean_residual).abs() < 1e-12);
    }

    /// Best gain over every (feature, midpoint) pair, computed directly.
    fn exhaustive_root_gain(t: &TransformedTable, base: f64, lambda: f64, min_leaf: usize) -> f64 {
        let n = t.len();
        let g: Vec<f64> = t.targets.iter().map(|y| base - y).collect();
        let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
        let parent = score(g.iter().sum(), n as f64);
        let mut best = f64::NEG_INFINITY;
        for f in 0..t.features.n_cols() {
            let mut values: Vec<f64> = (0..n).map(|i| t.features.get(i, f)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for pair in values.windows(2) {
                let thr = 0.5 * (pair[0] + pair[1]);
                let (mut gl, mut nl, mut gr, mut nr) = (0.0, 0usize, 0.0, 0usize);
                for (i, gi) in g.iter().enumerate() {
                    if t.features.get(i, f) < thr {
                        gl += gi;
                        nl += 1;
                    } else {
                        gr += gi;
                        nr += 1;
                    }
                }
                if nl >= min_leaf && nr >= min_leaf {
                    best = best.max(score(gl, nl as f64) + score(gr, nr as f64) - parent);
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        for seed in 0..10 {
            let t = random_table(seed, 200, 3);
            for min_leaf in [1, 20] {
                let cfg = TrainConfig {
                    n_trees: 1,
                    max_depth: 1,
                    min_samples_leaf: min_leaf,
                    ..TrainConfig::default()
                };
                let model = fit(&t, &cfg).unwrap();
                let Node::Split { gain, .. } = model.trees[0].nodes[0] else {
                    panic!("expected a root split");
                };
                let oracle = exhaustive_root_gain(&t, model.base_score, 1.0, min_leaf);
                assert!((gain - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "seed {seed}: {gain} vs {oracle}");
            }
        }
    }

    #[test]
    fn training_loss_is_non_increasing() {
        let t = random_table(9, 300, 3);
        let (_, history) = fit_with_history(&t, &TrainConfig { n_trees: 50, ..TrainConfig::default() }).unwrap();
        assert_eq!(history.len(), 51);
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        let labels: Vec<f64> = t.targets.iter().map(|&y| f64::from(u8::from(y > 1.0))).collect();
        let c = TransformedTable { targets: labels, task_kind: TaskKind::Classification, ..t };
        let (_, history) = fit_with_history(&c, &TrainConfig { n_trees: 50, ..TrainConfig::default() }).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn models_are_identical_across_thread_counts() {
        let t = random_table(21, 2000, 4);
        let cfg = TrainConfig { n_trees: 20, subsample: 0.8, seed: 4, ..TrainConfig::default() };
        let fit_on = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit(&t, &cfg).unwrap())
        };
        let one = fit_on(1);
        for threads in [2, 4, 8] {
            assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&fit_on(threads)).unwrap());
        }
    }

    #[test]
    fn subsampling_depends_on_seed() {
        let t = random_table(2, 500, 3);
        let cfg = TrainConfig { n_trees: 5, subsample: 0.5, ..TrainConfig::default() };
        let a = fit(&t, &TrainConfig { seed: 1, ..cfg.clone() }).unwrap();
        let b = fit(&t, &TrainConfig { seed: 1, ..cfg.clone() }).unwrap();
        let c = fit(&t, &TrainConfig { seed: 2, ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn grown_trees_respect_config() {
        let t = random_table(8, 400, 3);
        let cfg = TrainConfig { n_trees: 10, max_depth: 2, min_samples_leaf: 30, ..TrainConfig::default() };
        let model = fit(&t, &cfg).unwrap();
        model.validate().unwrap();
        for tree in &model.trees {
            assert!(tree.depth() <= 2);
            for leaf_rows in leaf_counts(tree, &t.features) {
                assert!(leaf_rows == 0 || leaf_rows >= 30);
            }
        }
    }

    fn leaf_counts(tree: &RegressionTree, x: &FeatureMatrix) -> Vec<usize> {
        let mut counts = vec![0; tree.nodes.len()];
        for row in x.rows() {
            let mut idx = 0;
            while let Node::Split { feature, threshold, left, right, .. } = tree.nodes[idx] {
                idx = if row[feature] < threshold { left } else { right };
            }
            counts[idx] += 1;
        }
        tree.nodes
            .iter()
            .zip(counts)
            .filter(|(n, _)| matches!(n, Node::Leaf { .. }))
            .map(|(_, c)| c)
            .collect()
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { n_trees: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 1.5, ..TrainConfig::default() },
            TrainConfig { subsample: 0.0, ..TrainConfig::default() },
            TrainConfig { min_samples_leaf: 0, ..TrainConfig::default() },
            TrainConfig { lambda: -1.0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
