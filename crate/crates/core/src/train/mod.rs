//! Optimization, hyperparameter search and model persistence.

mod adam;
mod checkpoint;
mod fit;
mod grid;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use fit::{
    fit, forecast_loss, pretrain_dae, train_forecaster, FitReport, PretrainReport, TrainConfig,
    TrainReport, TrainingMode,
};
pub use grid::{grid_search, train_and_validate, Grid, GridOutcome, GridPoint, GridResult, GridScore};

/// Seeds of the repeated runs: `seed, seed+1, …`.
pub fn run_seeds(seed: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|k| seed.wrapping_add(k)).collect()
}
