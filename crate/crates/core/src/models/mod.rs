//! The BDT forecaster and its benchmark models behind one [`Model`] type.

mod bdt;
mod benchmark;
mod features;

pub use bdt::Bdt;
pub use benchmark::{sinusoidal_encoding, ConvNet, RecurrentLayer, RecurrentNet, TransformerNet, CONV_KERNEL};
pub use features::{
    build_embedding_input, time_value_row, Batch, FeatureTable, TimeScale, FEATURE_DIM,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{CorruptionConfig, Dense, Mode};

/// Forecast horizons evaluated in the comparison table.
pub const HORIZONS: [usize; 5] = [24, 48, 72, 96, 120];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bdt,
    Transformer,
    Rnn,
    Lstm,
    Gru,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Bdt,
        ModelKind::Transformer,
        ModelKind::Rnn,
        ModelKind::Lstm,
        ModelKind::Gru,
        ModelKind::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bdt => "bdt",
            ModelKind::Transformer => "transformer",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::Cnn => "cnn",
        }
    }

    /// Column label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Bdt => "BDT",
            ModelKind::Transformer => "Transformer",
            ModelKind::Rnn => "RNN",
            ModelKind::Lstm => "LSTM",
            ModelKind::Gru => "GRU",
            ModelKind::Cnn => "CNN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Architecture and training hyperparameters. The first four fields are the
/// grid-searched ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub num_layers: usize,
    pub num_epochs: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// Bi-LSTM hidden width per direction.
    pub hidden_dim: usize,
    /// Autoencoder bottleneck width, below `model_dim`.
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub corruption: CorruptionConfig,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            num_layers: 1,
            num_epochs: 10,
            num_heads: 1,
            model_dim: 32,
            lookback: 168,
            horizon: 24,
            hidden_dim: 32,
            latent_dim: 16,
            learning_rate: 1e-3,
            batch_size: 32,
            corruption: CorruptionConfig::default(),
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("model_dim", self.model_dim),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if matches!(kind, ModelKind::Bdt | ModelKind::Transformer) && !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if kind == ModelKind::Bdt && (self.latent_dim == 0 || self.latent_dim >= self.model_dim) {
            return Err(Error::Config(format!(
                "latent_dim {} must be in 1..{}",
                self.latent_dim, self.model_dim
            )));
        }
        self.corruption.validate()
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
enum Network {
    Bdt(Bdt),
    Transformer(TransformerNet),
    Recurrent(RecurrentNet),
    Cnn(ConvNet),
}

/// A forecaster mapping `[L × 4]` time-value windows to `H` normalized loads.
#[derive(Clone, Debug)]
pub struct Model {
    kind: ModelKind,
    hp: Hyperparams,
    params: ParamSet,
    net: Network,
}

impl Model {
    /// Build and initialize a model; initialization is seeded by `hp.seed`.
    pub fn new(kind: ModelKind, hp: Hyperparams) -> Result<Self> {
        hp.validate(kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut params = ParamSet::new();
        let net = match kind {
            ModelKind::Bdt => Network::Bdt(Bdt::new(&mut params, &hp, &mut rng)?),
            ModelKind::Transformer => {
                Network::Transformer(TransformerNet::new(&mut params, &hp, &mut rng)?)
            }
            ModelKind::Rnn | ModelKind::Lstm | ModelKind::Gru => {
                Network::Recurrent(RecurrentNet::new(&mut params, kind, &hp, &mut rng))
            }
            ModelKind::Cnn => Network::Cnn(ConvNet::new(&mut params, &hp, &mut rng)),
        };
        Ok(Model { kind, hp, params, net })
    }

    /// BDT whose autoencoder is a square linear identity map with no corruption.
    pub fn bdt_with_identity_dae(hp: Hyperparams) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let mut params = ParamSet::new();
        let net = Network::Bdt(Bdt::with_identity_dae(&mut params, &hp, &mut rng)?);
        Ok(Model {
            kind: ModelKind::Bdt,
            hp,
            params,
            net,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn horizon(&self) -> usize {
        self.hp.horizon
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.element_count()
    }

    pub fn bdt(&self) -> Option<&Bdt> {
        match &self.net {
            Network::Bdt(b) => Some(b),
            _ => None,
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.lookback() != self.hp.lookback || batch.size() == 0 {
            return Err(Error::dim(
                "model_input",
                &[batch.size(), batch.lookback()],
                &[0, self.hp.lookback],
            ));
        }
        Ok(())
    }

    fn pre_head_parts<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        p: &Bound,
        batch: &Batch,
        mode: Mode,
        rng: &mut R,
        with_reconstruction: bool,
    ) -> Result<(Var, Option<Var>)> {
        self.check_batch(batch)?;
        match &self.net {
            Network::Bdt(n) => n.pre_head(tape, p, batch, mode, rng, with_reconstruction),
            Network::Transformer(n) => Ok((n.pre_head(tape, p, batch)?, None)),
            Network::Recurrent(n) => Ok((n.pre_head(tape, p, batch)?, None)),
            Network::Cnn(n) => Ok((n.pre_head(tape, p, batch)?, None)),
        }
    }

    /// Activations feeding the forecast head.
    pub fn pre_head<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        p: &Bound,
        batch: &Batch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        Ok(self.pre_head_parts(tape, p, batch, mode, rng, false)?.0)
    }

    /// Forecasts `[B × H]` and, for BDT, the reconstruction loss of the same pass.
    pub fn forward_with_reconstruction<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        p: &Bound,
        batch: &Batch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Var, Option<Var>)> {
        let (features, recon) = self.pre_head_parts(tape, p, batch, mode, rng, true)?;
        let y = self.head().forward(tape, p, features).map_err(|e| e.in_stage("head"))?;
        Ok((y, recon))
    }

    /// Forecasts `[B × H]` for a batch.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        p: &Bound,
        batch: &Batch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let (features, _) = self.pre_head_parts(tape, p, batch, mode, rng, false)?;
        self.head().forward(tape, p, features).map_err(|e| e.in_stage("head"))
    }

    fn head(&self) -> &Dense {
        match &self.net {
            Network::Bdt(n) => &n.head,
            Network::Transformer(n) => &n.head,
            Network::Recurrent(n) => &n.head,
            Network::Cnn(n) => &n.head,
        }
    }

    /// Eval-mode forecasts as a plain tensor.
    pub fn predict(&self, batch: &Batch) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        // Eval mode draws no randomness; the generator is never consulted.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = self.forward(&tape, &p, batch, Mode::Eval, &mut rng)?;
        Ok(tape.value(y))
    }
}

/// Constant step inputs `[B × 4]` on the tape.
fn step_vars(tape: &Tape, batch: &Batch) -> Vec<Var> {
    batch.steps.iter().map(|s| tape.constant(s.clone())).collect()
}

/// Load column only, as `[B × 1]` step inputs.
fn load_step_vars(tape: &Tape, batch: &Batch) -> Vec<Var> {
    batch
        .steps
        .iter()
        .map(|s| {
            let b = s.shape()[0];
            let data = (0..b).map(|r| s.row(r)[0]).collect();
            tape.constant(Tensor::from_parts(vec![b, 1], data))
        })
        .collect()
}

/// Load column stacked window-major: row `b·L + t`.
fn load_window_major(tape: &Tape, batch: &Batch) -> Var {
    let (b, l) = (batch.size(), batch.lookback());
    let data = (0..b)
        .flat_map(|w| batch.steps.iter().map(move |s| s.row(w)[0]))
        .collect();
    tape.constant(Tensor::from_parts(vec![b * l, 1], data))
}
