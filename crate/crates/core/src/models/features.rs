use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::WindowedDataset;
use crate::error::{Error, Result};

/// Per-timestep embedding width: load, hour-of-day, day-of-week, norm(t).
pub const FEATURE_DIM: usize = 4;

/// Min-max scale over epoch hours, giving `norm(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub first_hour: i64,
    pub last_hour: i64,
}

fn epoch_hour(t: DateTime<Utc>) -> i64 {
    t.timestamp().div_euclid(3600)
}

impl TimeScale {
    pub fn fit(first: DateTime<Utc>, last: DateTime<Utc>) -> Result<Self> {
        let (first_hour, last_hour) = (epoch_hour(first), epoch_hour(last));
        if last_hour <= first_hour {
            return Err(Error::DegenerateScale {
                min: first_hour as f64,
                max: last_hour as f64,
            });
        }
        Ok(TimeScale { first_hour, last_hour })
    }

    /// Scale spanning every hour of a dataset's series.
    pub fn for_dataset(ds: &WindowedDataset) -> Result<Self> {
        Self::fit(ds.start(), ds.timestamp(ds.values().len() - 1))
    }

    pub fn normalize(&self, t: DateTime<Utc>) -> f64 {
        (epoch_hour(t) - self.first_hour) as f64 / (self.last_hour - self.first_hour) as f64
    }
}

/// `[x, hour/23, weekday/6, norm(t)]` with Monday as weekday 0.
pub fn time_value_row(x: f64, t: DateTime<Utc>, scale: &TimeScale) -> [f64; FEATURE_DIM] {
    [
        x,
        f64::from(t.hour()) / 23.0,
        f64::from(t.weekday().num_days_from_monday()) / 6.0,
        scale.normalize(t),
    ]
}

/// Time-value embedding input `[L × 4]` for one window of normalized loads.
pub fn build_embedding_input(
    values: &[f64],
    timestamps: &[DateTime<Utc>],
    scale: &TimeScale,
) -> Result<Tensor> {
    if values.len() != timestamps.len() || values.is_empty() {
        return Err(Error::dim("build_embedding_input", &[values.len()], &[timestamps.len()]));
    }
    if let Some(w) = timestamps.windows(2).find(|w| w[1] - w[0] != Duration::hours(1)) {
        return Err(Error::DataIntegrity(format!(
            "timestamps {} and {} are not one hour apart",
            w[0], w[1]
        )));
    }
    let data = values
        .iter()
        .zip(timestamps)
        .flat_map(|(&x, &t)| time_value_row(x, t, scale))
        .collect();
    Tensor::new(vec![values.len(), FEATURE_DIM], data)
}

/// Time-value rows for every hour of a dataset, computed once and sliced per window.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    rows: Vec<[f64; FEATURE_DIM]>,
    targets: Vec<f64>,
    lookback: usize,
    horizon: usize,
}

impl FeatureTable {
    pub fn new(ds: &WindowedDataset, scale: &TimeScale) -> Self {
        let rows = ds
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| time_value_row(x, ds.timestamp(i), scale))
            .collect();
        FeatureTable {
            rows,
            targets: ds.values().to_vec(),
            lookback: ds.lookback(),
            horizon: ds.horizon(),
        }
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Inputs and targets for the given windows.
    pub fn batch(&self, windows: &[usize]) -> Batch {
        let b = windows.len();
        let steps = (0..self.lookback)
            .map(|t| {
                let data = windows.iter().flat_map(|&w| self.rows[w + t]).collect();
                Tensor::from_parts(vec![b, FEATURE_DIM], data)
            })
            .collect();
        let targets = windows
            .iter()
            .flat_map(|&w| {
                let s = w + self.lookback;
                self.targets[s..s + self.horizon].iter().copied()
            })
            .collect();
        Batch {
            steps,
            targets: Some(Tensor::from_parts(vec![b, self.horizon], targets)),
        }
    }
}

/// A minibatch of windows laid out time-major: `steps[t]` is `[B × 4]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub steps: Vec<Tensor>,
    pub targets: Option<Tensor>,
}

impl Batch {
    /// Batch of a single `[L × 4]` embedding input without targets.
    pub fn from_embedding(e: &Tensor) -> Result<Self> {
        if e.rank() != 2 || e.cols() != FEATURE_DIM {
            return Err(Error::dim("batch", e.shape(), &[0, FEATURE_DIM]));
        }
        let steps = (0..e.shape()[0])
            .map(|t| Tensor::from_parts(vec![1, FEATURE_DIM], e.row(t).to_vec()))
            .collect();
        Ok(Batch { steps, targets: None })
    }

    pub fn size(&self) -> usize {
        self.steps.first().map_or(0, |s| s.shape()[0])
    }

    pub fn lookback(&self) -> usize {
        self.steps.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hour(d: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, d, h, 0, 0).unwrap()
    }

    #[test]
    fn calendar_features() {
        let scale = TimeScale::fit(hour(1, 0), hour(8, 0)).unwrap();
        // 2024-01-01 is a Monday.
        assert_eq!(time_value_row(0.3, hour(1, 0), &scale), [0.3, 0.0, 0.0, 0.0]);
        let noon_sunday = time_value_row(0.0, hour(7, 12), &scale);
        assert_eq!(noon_sunday[1], 12.0 / 23.0);
        assert!((noon_sunday[1] - 0.5217).abs() < 1e-4);
        assert_eq!(noon_sunday[2], 1.0);
        assert_eq!(scale.normalize(hour(8, 0)), 1.0);
    }

    #[test]
    fn embedding_rejects_gaps() {
        let scale = TimeScale::fit(hour(1, 0), hour(2, 0)).unwrap();
        let e = build_embedding_input(&[1.0, 2.0], &[hour(1, 0), hour(1, 1)], &scale).unwrap();
        assert_eq!(e.shape(), &[2, 4]);
        let err = build_embedding_input(&[1.0, 2.0], &[hour(1, 0), hour(1, 2)], &scale).unwrap_err();
        assert!(matches!(err, Error::DataIntegrity(_)));
    }
}
