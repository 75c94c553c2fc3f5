use serde::{Deserialize, Serialize};

use super::metrics::{mae, rmse};
use crate::autodiff::Tensor;
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::models::{FeatureTable, Model, ModelKind, TimeScale};

/// Scale on which errors are measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricScale {
    #[default]
    Normalized,
    Kwh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    pub rmse: f64,
    pub mae: f64,
}

/// Outcome of one trained run at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub kind: ModelKind,
    pub horizon: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub seconds: f64,
}

impl RunResult {
    pub fn new(kind: ModelKind, horizon: usize, seed: u64, metrics: ErrorMetrics, seconds: f64) -> Result<Self> {
        if !(metrics.rmse >= 0.0 && metrics.mae >= 0.0) {
            return Err(Error::Numeric(format!("metrics {metrics:?}")));
        }
        // Power-mean inequality, with slack for rounding.
        if metrics.rmse < metrics.mae * (1.0 - 1e-12) {
            return Err(Error::Contract(format!(
                "rmse {} below mae {}",
                metrics.rmse, metrics.mae
            )));
        }
        Ok(RunResult {
            kind,
            horizon,
            seed,
            rmse: metrics.rmse,
            mae: metrics.mae,
            seconds,
        })
    }
}

const EVAL_CHUNK: usize = 64;

/// Score forecasts from `predict` (one `[B × H]` tensor per chunk of windows)
/// against the dataset targets.
pub fn evaluate_forecasts<F>(
    ds: &WindowedDataset,
    windows: &[usize],
    scale: MetricScale,
    mut predict: F,
) -> Result<ErrorMetrics>
where
    F: FnMut(&[usize]) -> Result<Tensor>,
{
    if windows.is_empty() {
        return Err(Error::Contract("no windows to evaluate".into()));
    }
    let mut preds = Vec::with_capacity(windows.len() * ds.horizon());
    let mut actual = Vec::with_capacity(preds.capacity());
    for chunk in windows.chunks(EVAL_CHUNK) {
        let y = predict(chunk)?;
        if y.shape() != [chunk.len(), ds.horizon()] {
            return Err(Error::dim("evaluate", y.shape(), &[chunk.len(), ds.horizon()]));
        }
        preds.extend_from_slice(y.data());
        for &w in chunk {
            actual.extend_from_slice(ds.target(w));
        }
    }
    if scale == MetricScale::Kwh {
        let n = ds
            .normalizer()
            .ok_or_else(|| Error::Config("kWh metrics need a fitted normalizer".into()))?;
        preds = n.denormalize_all(&preds);
        actual = n.denormalize_all(&actual);
    }
    Ok(ErrorMetrics {
        rmse: rmse(&preds, &actual)?,
        mae: mae(&preds, &actual)?,
    })
}

/// Eval-mode metrics of `model` over `windows` (normally the test split).
pub fn evaluate_model(
    model: &Model,
    ds: &WindowedDataset,
    windows: &[usize],
    scale: MetricScale,
) -> Result<ErrorMetrics> {
    evaluate_model_in(model, ds, windows, scale, &TimeScale::for_dataset(ds)?)
}

/// [`evaluate_model`] with an explicit time-feature scale.
pub fn evaluate_model_in(
    model: &Model,
    ds: &WindowedDataset,
    windows: &[usize],
    scale: MetricScale,
    time_scale: &TimeScale,
) -> Result<ErrorMetrics> {
    if model.horizon() != ds.horizon() {
        return Err(Error::Config(format!(
            "model horizon {} does not match dataset horizon {}",
            model.horizon(),
            ds.horizon()
        )));
    }
    if model.hyperparams().lookback != ds.lookback() {
        return Err(Error::Config(format!(
            "model lookback {} does not match dataset lookback {}",
            model.hyperparams().lookback,
            ds.lookback()
        )));
    }
    let table = FeatureTable::new(ds, time_scale);
    evaluate_forecasts(ds, windows, scale, |chunk| model.predict(&table.batch(chunk)))
}

/// "Same hour, previous day": the last observed day of inputs, repeated over
/// the horizon.
pub fn persistence_forecast(ds: &WindowedDataset, window: usize) -> Result<Vec<f64>> {
    let input = ds.input(window);
    if input.len() < 24 {
        return Err(Error::Config(format!(
            "persistence needs a lookback of at least 24 hours, have {}",
            input.len()
        )));
    }
    let last_day = &input[input.len() - 24..];
    Ok((0..ds.horizon()).map(|j| last_day[j % 24]).collect())
}

pub fn evaluate_persistence(ds: &WindowedDataset, windows: &[usize], scale: MetricScale) -> Result<ErrorMetrics> {
    evaluate_forecasts(ds, windows, scale, |chunk| {
        let data = chunk
            .iter()
            .map(|&w| persistence_forecast(ds, w))
            .collect::<Result<Vec<_>>>()?
            .concat();
        Tensor::new(vec![chunk.len(), ds.horizon()], data)
    })
}
