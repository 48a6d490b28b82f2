//! A fitted booster bundled with the transform it was trained on, stored as a
//! versioned JSON document.
//!
//! ```text
//! {
//!   "format": "uplift-model",
//!   "version": 1,
//!   "transform": "shifted-transformed-outcome",
//!   "shift": 0.0677,                        // null unless shifted
//!   "feature_names": ["informative_0", ...],
//!   "booster": {
//!     "loss": "squared-error" | "logistic",
//!     "base_score": 0.0012,
//!     "learning_rate": 0.1,
//!     "n_features": 5,
//!     "trees": [ { "nodes": [
//!         { "split": { "feature": 0, "threshold": 0.13, "gain": 2.1, "left": 1, "right": 2 } },
//!         { "leaf": { "value": -0.02 } }, ...
//!     ] }, ... ]
//!   }
//! }
//! ```
//!
//! Node 0 is the root; a row goes to `left` when `x[feature] < threshold`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gbt::{GbtModel, LossKind};
use crate::transforms::{uplift_from_prediction, TransformKind};

pub const MODEL_FORMAT: &str = "uplift-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftModel {
    pub format: String,
    pub version: u32,
    pub transform: TransformKind,
    pub shift: Option<f64>,
    pub feature_names: Vec<String>,
    pub booster: GbtModel,
}

impl UpliftModel {
    pub fn new(
        transform: TransformKind,
        shift: Option<f64>,
        feature_names: Vec<String>,
        booster: GbtModel,
    ) -> Result<Self> {
        let model = Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            transform,
            shift,
            feature_names,
            booster,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format tag `{}`", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                self.version
            )));
        }
        if self.feature_names.len() != self.booster.n_features {
            return Err(Error::ModelFormat(format!(
                "{} feature names for a booster over {} features",
                self.feature_names.len(),
                self.booster.n_features
            )));
        }
        let expected_loss = match self.transform {
            TransformKind::ClassVariable => LossKind::Logistic,
            _ => LossKind::SquaredError,
        };
        if self.booster.loss != expected_loss {
            return Err(Error::ModelFormat(format!(
                "transform {} requires {expected_loss:?} loss",
                self.transform
            )));
        }
        self.booster.validate()
    }

    /// Uplift estimate for every row of the dataset, in row order.
    pub fn predict_uplift(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let raw = self.booster.predict(&dataset.feature_matrix())?;
        raw.into_iter()
            .map(|r| uplift_from_prediction(self.transform, r))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("cannot parse model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
