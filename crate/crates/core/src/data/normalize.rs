use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which values a [`Normalizer`] is fitted on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// Minimum and maximum over the whole series, test period included.
    #[default]
    AllData,
    /// Minimum and maximum over the hours covered by training windows only.
    /// Avoids leaking test-period statistics into the inputs.
    TrainOnly,
}

/// Min-max scaling `x_norm = (x − x_min) / (x_max − x_min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_min: f64,
    pub x_max: f64,
    pub fit_scope: FitScope,
}

impl Normalizer {
    pub fn fit(values: &[f64], fit_scope: FitScope) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("cannot fit a normalizer on no values".into()));
        }
        let x_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let x_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if x_max <= x_min {
            return Err(Error::DegenerateScale { min: x_min, max: x_max });
        }
        Ok(Normalizer {
            x_min,
            x_max,
            fit_scope,
        })
    }

    pub fn range(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.x_min) / self.range()
    }

    pub fn denormalize(&self, x_norm: f64) -> f64 {
        x_norm * self.range() + self.x_min
    }

    pub fn normalize_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.normalize(v)).collect()
    }

    pub fn denormalize_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.denormalize(v)).collect()
    }
}
