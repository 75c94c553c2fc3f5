use std::sync::Arc;

use rand::Rng;

use super::features::{Batch, FEATURE_DIM};
use super::{step_vars, Hyperparams};
use crate::autodiff::{Bound, ParamSet, Tape, Var};
use crate::error::Result;
use crate::layers::{Activation, BiLstmLayer, Dae, Dense, EncoderBlock, Mode};

/// Bi-LSTM embedding → denoising autoencoder → transformer encoders → head.
///
/// The autoencoder runs per timestep on each `d_model`-wide embedding and
/// decodes back to `d_model`, so its output feeds the encoders directly.
#[derive(Clone, Debug)]
pub struct Bdt {
    pub embedding: BiLstmLayer,
    pub dae: Dae,
    pub encoders: Vec<EncoderBlock>,
    pub head: Dense,
    pub lookback: usize,
    pub d_model: usize,
}

impl Bdt {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, hp: &Hyperparams, rng: &mut R) -> Result<Self> {
        Self::build(params, hp, rng, |params, rng| {
            Dae::new(
                params,
                "dae",
                hp.model_dim,
                hp.latent_dim,
                Activation::Sigmoid,
                hp.corruption,
                rng,
            )
        })
    }

    /// Variant with [`Dae::identity`], which isolates the attention path.
    pub fn with_identity_dae<R: Rng + ?Sized>(
        params: &mut ParamSet,
        hp: &Hyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(params, hp, rng, |params, _| Ok(Dae::identity(params, "dae", hp.model_dim)))
    }

    fn build<R: Rng + ?Sized>(
        params: &mut ParamSet,
        hp: &Hyperparams,
        rng: &mut R,
        make_dae: impl FnOnce(&mut ParamSet, &mut R) -> Result<Dae>,
    ) -> Result<Self> {
        let d = hp.model_dim;
        let embedding = BiLstmLayer::new(params, "embed", FEATURE_DIM, hp.hidden_dim, d, rng);
        let dae = make_dae(params, rng)?;
        let encoders = (0..hp.num_layers)
            .map(|i| EncoderBlock::new(params, &format!("enc{i}"), d, hp.num_heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Dense::new(params, "head", hp.lookback * d, hp.horizon, rng);
        Ok(Bdt {
            embedding,
            dae,
            encoders,
            head,
            lookback: hp.lookback,
            d_model: d,
        })
    }

    /// Clean embeddings `X_em`, stacked time-major `[L·B × d]`.
    pub fn embed(&self, tape: &Tape, p: &Bound, batch: &Batch) -> Result<Var> {
        self.embedding
            .forward_steps(tape, p, &step_vars(tape, batch))
            .map_err(|e| e.in_stage("embedding"))
    }

    /// `X̂_em = decode(encode(X̃_em))`, corrupting first in training mode.
    pub fn reconstruct<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        p: &Bound,
        x_em: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let noisy = match mode {
            Mode::Train => self.dae.corruption.apply(tape, x_em, rng)?,
            Mode::Eval => x_em,
        };
        let latent = self.dae.encode(tape, p, noisy)?;
        self.dae.decode(tape, p, latent)
    }

    /// Reconstruction loss of the clean embeddings. Gradients reach the
    /// Bi-LSTM through both the target and the reconstruction.
    pub fn reconstruction_loss(&self, tape: &Tape, x_em: Var, x_hat: Var) -> Result<Var> {
        Dae::loss(tape, x_em, x_hat)
    }

    /// Pre-head activations plus, when `with_reconstruction`, the
    /// autoencoder's reconstruction loss from the same pass.
    pub(super) fn pre_head<R: Rng + ?Sized>(
        &self,
        tape: &Tape,
        p: &Bound,
        batch: &Batch,
        mode: Mode,
        rng: &mut R,
        with_reconstruction: bool,
    ) -> Result<(Var, Option<Var>)> {
        let (b, l) = (batch.size(), batch.lookback());
        let x_em = self.embed(tape, p, batch)?;
        let x_hat = self
            .reconstruct(tape, p, x_em, mode, rng)
            .map_err(|e| e.in_stage("autoencoder"))?;
        let recon = if with_reconstruction {
            Some(self.reconstruction_loss(tape, x_em, x_hat)?)
        } else {
            None
        };
        // Time-major rows t·B + w become window-major rows w·L + t.
        let index: Arc<[Option<usize>]> = (0..b * l).map(|r| Some((r % l) * b + r / l)).collect();
        let mut x = tape.gather_rows(x_hat, index)?;
        for (i, block) in self.encoders.iter().enumerate() {
            x = block
                .forward(tape, p, x, l)
                .map_err(|e| e.in_stage(&format!("encoder{i}")))?;
        }
        Ok((tape.reshape(x, vec![b, l * self.d_model])?, recon))
    }
}
