use std::ops::Range;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::hourly::HourlySeries;
use super::normalize::{FitScope, Normalizer};
use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Window index ranges of the three partitions, in chronological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// `⌊0.8·n⌋ / ⌊0.1·n⌋ / remainder`.
    pub fn sizes(n: usize) -> (usize, usize, usize) {
        let train = (n as f64 * TRAIN_FRACTION).floor() as usize;
        let validation = (n as f64 * VALIDATION_FRACTION).floor() as usize;
        (train, validation, n - train - validation)
    }
}

/// Stride-1 supervised windows over a (usually normalized) hourly series.
/// Window `i` reads inputs `[i, i+L)` and targets `[i+L, i+L+H)`.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    start: DateTime<Utc>,
    values: Vec<f64>,
    lookback: usize,
    horizon: usize,
    normalizer: Option<Normalizer>,
    split: Split,
    train_order: Vec<usize>,
}

impl WindowedDataset {
    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Hourly values the windows are cut from.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.len() - self.lookback - self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Training window indices in iteration order (permuted by the split seed).
    pub fn train_order(&self) -> &[usize] {
        &self.train_order
    }

    pub fn input(&self, window: usize) -> &[f64] {
        &self.values[window..window + self.lookback]
    }

    pub fn target(&self, window: usize) -> &[f64] {
        let s = window + self.lookback;
        &self.values[s..s + self.horizon]
    }

    pub fn input_times(&self, window: usize) -> Vec<DateTime<Utc>> {
        (window..window + self.lookback)
            .map(|i| self.timestamp(i))
            .collect()
    }

    /// Timestamp of the first forecast hour of a window.
    pub fn origin(&self, window: usize) -> DateTime<Utc> {
        self.timestamp(window + self.lookback)
    }

    /// Restrict the training partition to `windows` (used for small fixtures).
    pub fn with_train_windows(mut self, windows: Range<usize>) -> Result<Self> {
        if windows.end > self.len() || windows.is_empty() {
            return Err(Error::Contract(format!(
                "training windows {windows:?} outside 0..{}",
                self.len()
            )));
        }
        self.train_order = windows.clone().collect();
        self.split = Split {
            validation: windows.end..windows.end,
            test: windows.end..windows.end,
            train: windows,
        };
        Ok(self)
    }
}

/// Cut `series` into windows. All windows start in the training partition,
/// in chronological order, until [`split_dataset`] partitions them.
pub fn make_windows(series: HourlySeries, lookback: usize, horizon: usize) -> Result<WindowedDataset> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::Config("lookback and horizon must be positive".into()));
    }
    let needed = lookback + horizon;
    if series.len() < needed {
        return Err(Error::Contract(format!(
            "series of {} hours is too short: lookback {lookback} + horizon {horizon} needs at least {needed}",
            series.len()
        )));
    }
    let n = series.len() - needed + 1;
    Ok(WindowedDataset {
        start: series.start(),
        values: series.values().to_vec(),
        lookback,
        horizon,
        normalizer: None,
        split: Split {
            train: 0..n,
            validation: n..n,
            test: n..n,
        },
        train_order: (0..n).collect(),
    })
}

/// Chronological 80/10/10 partition; only the training order is shuffled.
pub fn split_dataset(mut ds: WindowedDataset, shuffle_seed: u64) -> Result<WindowedDataset> {
    let n = ds.len();
    if n < 3 {
        return Err(Error::Contract(format!(
            "splitting needs at least 3 windows, have {n}"
        )));
    }
    let (train, validation, _) = Split::sizes(n);
    ds.split = Split {
        train: 0..train,
        validation: train..train + validation,
        test: train + validation..n,
    };
    let mut order: Vec<usize> = ds.split.train.clone().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    ds.train_order = order;
    Ok(ds)
}

/// Normalize, window and split a raw hourly series in one step.
pub fn prepare_dataset(
    raw: &HourlySeries,
    lookback: usize,
    horizon: usize,
    scope: FitScope,
    shuffle_seed: u64,
) -> Result<WindowedDataset> {
    let windows = make_windows(raw.clone(), lookback, horizon)?;
    let n = windows.len();
    if n < 3 {
        return Err(Error::Contract(format!(
            "series of {} hours yields {n} windows; at least 3 are needed",
            raw.len()
        )));
    }
    let fit_values = match scope {
        FitScope::AllData => raw.values(),
        FitScope::TrainOnly => {
            let (train, _, _) = Split::sizes(n);
            &raw.values()[..train - 1 + lookback + horizon]
        }
    };
    let normalizer = Normalizer::fit(fit_values, scope)?;
    let mut ds = split_dataset(windows, shuffle_seed)?;
    ds.values = normalizer.normalize_all(raw.values());
    ds.normalizer = Some(normalizer);
    Ok(ds)
}

/// Like [`prepare_dataset`] but with an already fitted normalizer, e.g. the
/// one stored alongside a trained model.
pub fn prepare_dataset_with(
    raw: &HourlySeries,
    lookback: usize,
    horizon: usize,
    normalizer: Normalizer,
    shuffle_seed: u64,
) -> Result<WindowedDataset> {
    let mut ds = split_dataset(make_windows(raw.clone(), lookback, horizon)?, shuffle_seed)?;
    ds.values = normalizer.normalize_all(raw.values());
    ds.normalizer = Some(normalizer);
    Ok(ds)
}
