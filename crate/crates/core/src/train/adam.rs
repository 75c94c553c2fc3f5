use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientMap, ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads` must hold a shape-matching entry for every parameter.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradientMap) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, model has {}",
                self.first.len(),
                params.len()
            )));
        }
        let mut updates = Vec::with_capacity(params.len());
        for (id, name, value) in params.iter() {
            let g = grads
                .get(id)
                .ok_or_else(|| Error::Contract(format!("no gradient for parameter {name}")))?;
            if g.shape() != value.shape() {
                return Err(Error::Contract(format!(
                    "gradient shape {:?} does not match parameter {name} {:?}",
                    g.shape(),
                    value.shape()
                )));
            }
            updates.push((id, g));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (id, g) in updates {
            let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
            let current = params.get(id);
            let data = current
                .data()
                .iter()
                .zip(g.data())
                .enumerate()
                .map(|(i, (&x, &gi))| {
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    x - lr * m_hat / (v_hat.sqrt() + eps)
                })
                .collect();
            let next = Tensor::new(current.shape().to_vec(), data)?;
            if !next.all_finite() {
                return Err(Error::Numeric(format!("adam update of {}", params.name(id))));
            }
            params.set(id, next)?;
        }
        Ok(())
    }
}
