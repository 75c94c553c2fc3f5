use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use crate::autodiff::{ParamSet, Tape};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::models::{FeatureTable, Hyperparams, Model, TimeScale};

/// How the autoencoder objective combines with the forecasting objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Reconstruction pretraining first, then forecasting fine-tuning.
    #[default]
    TwoPhase,
    /// One phase minimizing forecast MSE plus reconstruction loss.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Global gradient-norm clipping threshold.
    pub clip_norm: f64,
    pub mode: TrainingMode,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            pretrain_epochs: 10,
            seed: 0,
            patience: None,
            clip_norm: 5.0,
            mode: TrainingMode::TwoPhase,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Epochs, batch size, learning rate and seed taken from `hp`.
    pub fn from_hyperparams(hp: &Hyperparams) -> Self {
        TrainConfig {
            epochs: hp.num_epochs,
            batch_size: hp.batch_size,
            seed: hp.seed,
            optimizer: AdamConfig {
                learning_rate: hp.learning_rate,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive when set".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!("clip_norm {} must be positive", self.clip_norm)));
        }
        let lr = self.optimizer.learning_rate;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Reconstruction loss over the training windows before any update.
    pub initial_loss: f64,
    /// Same measurement after the last epoch.
    pub final_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    /// Epoch (0-based) whose parameters were retained.
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub pretrain: Option<PretrainReport>,
    pub train: TrainReport,
}

fn clip(grads: &mut crate::autodiff::GradientMap, max_norm: f64) {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

fn check_shapes(model: &Model, ds: &WindowedDataset) -> Result<()> {
    let hp = model.hyperparams();
    if hp.horizon != ds.horizon() {
        return Err(Error::Config(format!(
            "model horizon {} does not match dataset horizon {}",
            hp.horizon,
            ds.horizon()
        )));
    }
    if hp.lookback != ds.lookback() {
        return Err(Error::Config(format!(
            "model lookback {} does not match dataset lookback {}",
            hp.lookback,
            ds.lookback()
        )));
    }
    Ok(())
}

/// Separate generator streams for shuffling and corruption noise.
fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let shuffle = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    (shuffle, noise)
}

/// Mean reconstruction loss over `windows`, with corruption drawn from a fixed seed.
fn reconstruction_loss(model: &Model, table: &FeatureTable, windows: &[usize], cfg: &TrainConfig) -> Result<f64> {
    let bdt = model
        .bdt()
        .ok_or_else(|| Error::Config("only BDT models have an autoencoder".into()))?;
    let (_, mut noise) = rngs(cfg.seed ^ 0x5eed);
    let mut total = 0.0;
    for chunk in windows.chunks(cfg.batch_size) {
        let tape = Tape::new();
        let p = model.params().bind(&tape);
        let x_em = bdt.embed(&tape, &p, &table.batch(chunk))?;
        let x_hat = bdt.reconstruct(&tape, &p, x_em, Mode::Train, &mut noise)?;
        let loss = bdt.reconstruction_loss(&tape, x_em, x_hat)?;
        total += tape.value(loss).item()? * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Minimize the reconstruction loss of corrupted embeddings over the training
/// windows, updating the Bi-LSTM and the autoencoder together.
pub fn pretrain_dae(model: &mut Model, ds: &WindowedDataset, cfg: &TrainConfig) -> Result<PretrainReport> {
    cfg.validate()?;
    check_shapes(model, ds)?;
    if model.bdt().is_none() {
        return Err(Error::Config(format!("{} has no autoencoder to pretrain", model.kind())));
    }
    let train: Vec<usize> = ds.train_order().to_vec();
    if train.is_empty() {
        return Err(Error::Contract("empty training split".into()));
    }
    if cfg.pretrain_epochs == 0 {
        return Ok(PretrainReport::default());
    }
    let table = FeatureTable::new(ds, &TimeScale::for_dataset(ds)?);
    let initial_loss = reconstruction_loss(model, &table, &train, cfg)?;
    let (mut shuffle, mut noise) = rngs(cfg.seed);
    let mut adam = Adam::new(cfg.optimizer, model.params());
    let mut order = train.clone();
    let mut epoch_losses = Vec::with_capacity(cfg.pretrain_epochs);
    for _ in 0..cfg.pretrain_epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bdt = model.bdt().expect("checked above");
            let tape = Tape::new();
            let p = model.params().bind(&tape);
            let x_em = bdt.embed(&tape, &p, &table.batch(chunk))?;
            let x_hat = bdt.reconstruct(&tape, &p, x_em, Mode::Train, &mut noise)?;
            let loss = bdt.reconstruction_loss(&tape, x_em, x_hat)?;
            total += tape.value(loss).item()? * chunk.len() as f64;
            let mut grads = tape.backward(loss)?;
            clip(&mut grads, cfg.clip_norm);
            adam.step(model.params_mut(), &grads)?;
        }
        epoch_losses.push(total / order.len() as f64);
    }
    let final_loss = reconstruction_loss(model, &table, &train, cfg)?;
    Ok(PretrainReport {
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Eval-mode forecast MSE over `windows`.
pub fn forecast_loss(model: &Model, table: &FeatureTable, windows: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in windows.chunks(64) {
        let batch = table.batch(chunk);
        let y = model.predict(&batch)?;
        let target = batch.targets.as_ref().expect("dataset batches carry targets");
        let sq: f64 = y.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sq;
    }
    Ok(total / (windows.len() * table.horizon()) as f64)
}

/// Minibatch forecasting training. The parameters with the lowest validation
/// loss are kept; without a validation split the last epoch's are kept.
pub fn train_forecaster(model: &mut Model, ds: &WindowedDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_shapes(model, ds)?;
    let train: Vec<usize> = ds.train_order().to_vec();
    if train.is_empty() {
        return Err(Error::Contract("empty training split".into()));
    }
    let validation: Vec<usize> = ds.split().validation.clone().collect();
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok(report);
    }
    let table = FeatureTable::new(ds, &TimeScale::for_dataset(ds)?);
    let joint = cfg.mode == TrainingMode::Joint && model.bdt().is_some();
    let (mut shuffle, mut noise) = rngs(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.optimizer, model.params());
    let mut order = train;
    let mut best: Option<(f64, ParamSet)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = table.batch(chunk);
            let tape = Tape::new();
            let p = model.params().bind(&tape);
            let (y, recon) = if joint {
                model.forward_with_reconstruction(&tape, &p, &batch, Mode::Train, &mut noise)?
            } else {
                (model.forward(&tape, &p, &batch, Mode::Train, &mut noise)?, None)
            };
            let target = tape.constant(batch.targets.clone().expect("dataset batches carry targets"));
            let mse = tape.mse(y, target)?;
            total += tape.value(mse).item()? * chunk.len() as f64;
            let loss = match recon {
                Some(r) => tape.add(mse, r)?,
                None => mse,
            };
            let mut grads = tape.backward(loss)?;
            clip(&mut grads, cfg.clip_norm);
            adam.step(model.params_mut(), &grads)?;
        }
        report.train_losses.push(total / order.len() as f64);

        if validation.is_empty() {
            report.best_epoch = Some(epoch);
            continue;
        }
        let val = forecast_loss(model, &table, &validation)?;
        report.validation_losses.push(val);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, model.params().clone()));
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(report)
}

/// Pretrain (BDT, two-phase mode) and then train the forecaster.
pub fn fit(model: &mut Model, ds: &WindowedDataset, cfg: &TrainConfig) -> Result<FitReport> {
    let pretrain = if model.bdt().is_some() && cfg.mode == TrainingMode::TwoPhase && cfg.pretrain_epochs > 0 {
        Some(pretrain_dae(model, ds, cfg)?)
    } else {
        None
    };
    let train = train_forecaster(model, ds, cfg)?;
    Ok(FitReport { pretrain, train })
}
