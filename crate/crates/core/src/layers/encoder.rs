use rand::Rng;

use super::{Dense, MultiHeadAttention};
use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row layer normalization with learnable scale and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, prefix: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: params.add(format!("{prefix}.gamma"), Tensor::full(&[dim], 1.0)),
            beta: params.add(format!("{prefix}.beta"), Tensor::zeros(&[dim])),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, tape: &Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(x, p.var(self.gamma), p.var(self.beta), self.eps)
    }
}

/// Post-norm transformer encoder block:
/// `y₁ = LN(x + MHA(x))`, `y₂ = LN(y₁ + W₂·relu(W₁·y₁))`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub ff_inner: Dense,
    pub ff_outer: Dense,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
}

impl EncoderBlock {
    /// Feed-forward inner width is `4·d_model`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        d_model: usize,
        num_heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let attention = MultiHeadAttention::new(params, &format!("{prefix}.mha"), d_model, num_heads, rng)?;
        let ff_inner = Dense::new(params, &format!("{prefix}.ff1"), d_model, 4 * d_model, rng);
        let ff_outer = Dense::new(params, &format!("{prefix}.ff2"), 4 * d_model, d_model, rng);
        Ok(EncoderBlock {
            attention,
            norm1: LayerNorm::new(params, &format!("{prefix}.ln1"), d_model),
            norm2: LayerNorm::new(params, &format!("{prefix}.ln2"), d_model),
            ff_inner,
            ff_outer,
        })
    }

    pub fn d_model(&self) -> usize {
        self.attention.d_model
    }

    /// `x` stacks sequences of `seq_len` rows; output has the same shape.
    pub fn forward(&self, tape: &Tape, p: &Bound, x: Var, seq_len: usize) -> Result<Var> {
        let attended = self.attention.forward(tape, p, x, seq_len)?;
        let y1 = self.norm1.forward(tape, p, tape.add(x, attended)?)?;
        let inner = tape.relu(self.ff_inner.forward(tape, p, y1)?)?;
        let ff = self.ff_outer.forward(tape, p, inner)?;
        self.norm2.forward(tape, p, tape.add(y1, ff)?)
    }
}
