use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit, TrainConfig};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, MetricScale};
use crate::models::{Hyperparams, Model, ModelKind};

/// Value lists for the four searched hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub num_layers: Vec<usize>,
    pub num_epochs: Vec<usize>,
    pub num_heads: Vec<usize>,
    pub model_dim: Vec<usize>,
}

impl Grid {
    /// Layers {1,3,6} × epochs {10,50,100} × heads {1,8} × model dim {32,64}.
    pub fn standard() -> Self {
        Grid {
            num_layers: vec![1, 3, 6],
            num_epochs: vec![10, 50, 100],
            num_heads: vec![1, 8],
            model_dim: vec![32, 64],
        }
    }

    /// Single point taken from `hp`.
    pub fn single(hp: &Hyperparams) -> Self {
        Grid {
            num_layers: vec![hp.num_layers],
            num_epochs: vec![hp.num_epochs],
            num_heads: vec![hp.num_heads],
            model_dim: vec![hp.model_dim],
        }
    }

    /// Every combination, layers varying slowest and model dim fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &num_layers in &self.num_layers {
            for &num_epochs in &self.num_epochs {
                for &num_heads in &self.num_heads {
                    for &model_dim in &self.model_dim {
                        out.push(GridPoint {
                            num_layers,
                            num_epochs,
                            num_heads,
                            model_dim,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub num_layers: usize,
    pub num_epochs: usize,
    pub num_heads: usize,
    pub model_dim: usize,
}

impl GridPoint {
    pub fn apply(&self, base: &Hyperparams) -> Hyperparams {
        Hyperparams {
            num_layers: self.num_layers,
            num_epochs: self.num_epochs,
            num_heads: self.num_heads,
            model_dim: self.model_dim,
            ..base.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub val_mae: f64,
    pub val_rmse: f64,
    pub parameter_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    pub hyperparams: Hyperparams,
    pub score: GridScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: GridResult,
    /// Every point in enumeration order.
    pub results: Vec<GridResult>,
}

/// Score every grid point with `score` and select the lowest validation MAE,
/// then lowest RMSE, then fewest parameters, then earliest point.
/// Up to `jobs` points are scored concurrently.
pub fn grid_search<F>(grid: &Grid, base: &Hyperparams, jobs: usize, score: F) -> Result<GridOutcome>
where
    F: Fn(&Hyperparams) -> Result<GridScore> + Sync,
{
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Contract("empty hyperparameter grid".into()));
    }
    let evaluate = |point: &GridPoint| -> Result<GridResult> {
        let hyperparams = point.apply(base);
        let score = score(&hyperparams)?;
        Ok(GridResult {
            point: *point,
            hyperparams,
            score,
        })
    };
    let results: Vec<GridResult> = if jobs <= 1 {
        points.iter().map(evaluate).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| points.par_iter().map(evaluate).collect::<Result<_>>())?
    };
    let best = results
        .iter()
        .min_by(|a, b| {
            a.score
                .val_mae
                .total_cmp(&b.score.val_mae)
                .then(a.score.val_rmse.total_cmp(&b.score.val_rmse))
                .then(a.score.parameter_count.cmp(&b.score.parameter_count))
        })
        .expect("non-empty grid")
        .clone();
    Ok(GridOutcome { best, results })
}

/// Train `kind` with `hp` on the training split and score it on validation.
pub fn train_and_validate(
    kind: ModelKind,
    hp: &Hyperparams,
    ds: &WindowedDataset,
    base: &TrainConfig,
) -> Result<GridScore> {
    let mut model = Model::new(kind, hp.clone())?;
    let cfg = TrainConfig {
        epochs: hp.num_epochs,
        ..base.clone()
    };
    fit(&mut model, ds, &cfg)?;
    let validation: Vec<usize> = ds.split().validation.clone().collect();
    let m = evaluate_model(&model, ds, &validation, MetricScale::Normalized)?;
    Ok(GridScore {
        val_mae: m.mae,
        val_rmse: m.rmse,
        parameter_count: model.parameter_count(),
    })
}
