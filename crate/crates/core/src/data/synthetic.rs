use std::f64::consts::TAU;

use chrono::{TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::hourly::HourlySeries;
use crate::error::Result;

/// Parameters of the synthetic daily + weekly load fixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub hours: usize,
    pub base: f64,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            hours: 500,
            base: 10.0,
            daily_amplitude: 5.0,
            weekly_amplitude: 3.0,
            noise_sigma: 0.5,
            seed: 7,
        }
    }
}

/// Hourly series starting Monday 2024-01-01T00:00Z:
/// `base + a_d·sin(2πh/24) + a_w·sin(2πh/168) + N(0, σ)`, clamped at zero.
pub fn synthetic_series(spec: &SyntheticSpec) -> Result<HourlySeries> {
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| crate::Error::Config(e.to_string()))?;
    let values = (0..spec.hours)
        .map(|h| {
            let h = h as f64;
            let v = spec.base
                + spec.daily_amplitude * (TAU * h / 24.0).sin()
                + spec.weekly_amplitude * (TAU * h / 168.0).sin()
                + noise.sample(&mut rng);
            v.max(0.0)
        })
        .collect();
    HourlySeries::new(start, values)
}
