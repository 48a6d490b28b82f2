use serde::{Deserialize, Serialize};

use crate::sigmoid;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `(pred - target)^2 / 2`.
    SquaredError,
    /// Binary cross-entropy on the logit scale.
    Logistic,
}

impl LossKind {
    /// Pointwise loss on the raw (pre-link) prediction.
    pub fn loss(self, prediction: f64, target: f64) -> f64 {
        match self {
            LossKind::SquaredError => 0.5 * (prediction - target) * (prediction - target),
            LossKind::Logistic => softplus(prediction) - target * prediction,
        }
    }

    /// Applies the inverse link to a raw prediction.
    pub fn transform(self, raw: f64) -> f64 {
        match self {
            LossKind::SquaredError => raw,
            LossKind::Logistic => sigmoid(raw),
        }
    }

    pub fn mean_loss(self, predictions: &[f64], targets: &[f64]) -> f64 {
        let total: f64 = predictions
            .iter()
            .zip(targets)
            .map(|(&p, &t)| self.loss(p, t))
            .sum();
        total / targets.len().max(1) as f64
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// First and second derivatives of the loss with respect to the raw prediction.
#[inline]
pub fn loss_gradient(loss: LossKind, prediction: f64, target: f64) -> (f64, f64) {
    match loss {
        LossKind::SquaredError => (prediction - target, 1.0),
        LossKind::Logistic => {
            let s = sigmoid(prediction);
            (s - target, s * (1.0 - s))
        }
    }
}
