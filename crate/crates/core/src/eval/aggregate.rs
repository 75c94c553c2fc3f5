use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::evaluate::RunResult;
use crate::error::{Error, Result};
use crate::models::ModelKind;

/// Mean and sample standard deviation over repeated runs of one model at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub kind: ModelKind,
    pub horizon: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub runs: usize,
    /// Set when only one run is available and the deviation is reported as 0.
    pub low_confidence: bool,
}

/// Mean and `n−1` standard deviation; a single value has deviation 0.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate_runs(results: &[RunResult]) -> Result<HorizonMetrics> {
    let first = results
        .first()
        .ok_or_else(|| Error::Contract("cannot aggregate zero runs".into()))?;
    if let Some(r) = results
        .iter()
        .find(|r| r.kind != first.kind || r.horizon != first.horizon)
    {
        return Err(Error::Contract(format!(
            "mixed runs: {} h{} with {} h{}",
            first.kind, first.horizon, r.kind, r.horizon
        )));
    }
    let rmse: Vec<f64> = results.iter().map(|r| r.rmse).collect();
    let mae: Vec<f64> = results.iter().map(|r| r.mae).collect();
    let (rmse_mean, rmse_std) = mean_and_std(&rmse);
    let (mae_mean, mae_std) = mean_and_std(&mae);
    Ok(HorizonMetrics {
        kind: first.kind,
        horizon: first.horizon,
        rmse_mean,
        rmse_std,
        mae_mean,
        mae_std,
        runs: results.len(),
        low_confidence: results.len() == 1,
    })
}

/// Group runs by (model, horizon) and aggregate each group.
pub fn aggregate_all(results: &[RunResult]) -> Result<Vec<HorizonMetrics>> {
    let mut groups: BTreeMap<(usize, ModelKind), Vec<RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.horizon, r.kind)).or_default().push(r.clone());
    }
    groups.values().map(|g| aggregate_runs(g)).collect()
}

/// Horizon × model grid of metrics with per-horizon winners.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub horizons: Vec<usize>,
    pub models: Vec<ModelKind>,
    cells: BTreeMap<(usize, ModelKind), HorizonMetrics>,
    pub winners: Vec<ModelKind>,
}

impl ComparisonTable {
    pub fn cell(&self, horizon: usize, kind: ModelKind) -> &HorizonMetrics {
        &self.cells[&(horizon, kind)]
    }

    pub fn wins(&self, kind: ModelKind) -> usize {
        self.winners.iter().filter(|&&w| w == kind).count()
    }
}

/// Per horizon, the model with the lowest mean MAE wins; ties go to the lower
/// mean RMSE.
pub fn count_wins(metrics: &[HorizonMetrics]) -> Result<ComparisonTable> {
    if metrics.is_empty() {
        return Err(Error::Contract("empty comparison table".into()));
    }
    let horizons: Vec<usize> = metrics.iter().map(|m| m.horizon).collect::<BTreeSet<_>>().into_iter().collect();
    let models: Vec<ModelKind> = metrics.iter().map(|m| m.kind).collect::<BTreeSet<_>>().into_iter().collect();
    let mut cells = BTreeMap::new();
    for m in metrics {
        if cells.insert((m.horizon, m.kind), m.clone()).is_some() {
            return Err(Error::Contract(format!("duplicate cell {} at {} h", m.kind, m.horizon)));
        }
    }
    let mut winners = Vec::with_capacity(horizons.len());
    for &h in &horizons {
        let mut best: Option<&HorizonMetrics> = None;
        for &k in &models {
            let cell = cells
                .get(&(h, k))
                .ok_or_else(|| Error::Contract(format!("missing cell: {k} at {h} h")))?;
            let better = best.is_none_or(|b| {
                cell.mae_mean
                    .total_cmp(&b.mae_mean)
                    .then(cell.rmse_mean.total_cmp(&b.rmse_mean))
                    .is_lt()
            });
            if better {
                best = Some(cell);
            }
        }
        winners.push(best.expect("at least one model").kind);
    }
    Ok(ComparisonTable {
        horizons,
        models,
        cells,
        winners,
    })
}
