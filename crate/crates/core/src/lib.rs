//! Uplift modeling for binary outcomes through outcome transformation.
//!
//! The crate covers the full pipeline of a transformation-based uplift study:
//!
//! * [`dataset`]: the `(Y, W, X)` data model, CSV ingestion and stratified splits.
//! * [`propensity`]: treatment probabilities `p(x)` consumed by the transforms.
//! * [`transforms`]: the class-variable transform `Z`, the transformed outcome
//!   `Z*` and the shifted transformed outcome `(Y - C)(W - p) / (p(1 - p))`.
//! * [`gbt`]: a second-order gradient-boosted tree learner.
//! * [`synthgen`]: seeded synthetic uplift data with known per-row effects.
//! * [`metrics`]: Qini curve and coefficient, AUUC, decile uplift, phi correlation.
//! * [`model`]: a fitted booster bundled with the transform that produced its target.

pub mod dataset;
pub mod error;
pub mod gbt;
pub mod metrics;
pub mod model;
pub mod propensity;
pub mod synthgen;
pub mod transforms;

pub use dataset::{ArmStats, ArmSummary, ColumnRoles, Dataset, FeatureMatrix, FeatureSchema, Sample};
pub use error::{Error, Result};
pub use gbt::{GbtModel, LossKind, RegressionTree, TrainConfig};
pub use metrics::{CurvePoint, MetricsReport, ScoredSample};
pub use model::UpliftModel;
pub use propensity::PropensitySource;
pub use synthgen::{GeneratedDataset, SynthConfig};
pub use transforms::{TaskKind, TransformKind, TransformSpec, TransformedTable};

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of a probability.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
