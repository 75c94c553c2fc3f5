//! Differentiable building blocks over the autodiff tape.
//!
//! Layers own [`ParamId`] handles into a model-wide [`ParamSet`]; the tensors
//! themselves live in the set so that optimizers and checkpoints see one flat,
//! named collection.

mod attention;
mod conv;
mod dae;
mod encoder;
mod lstm;
mod recurrent;

pub use attention::{attention, attention_weights, MultiHeadAttention};
pub use conv::CausalConv1d;
pub use dae::{corrupt, Activation, CorruptionConfig, CorruptionKind, Dae};
pub use encoder::{EncoderBlock, LayerNorm, LAYER_NORM_EPS};
pub use lstm::{BiLstmLayer, LstmCell};
pub use recurrent::{GruCell, RnnCell};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::Result;

/// Whether a forward pass applies training-only noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Glorot/Xavier uniform initialization for a `[fan_in × fan_out]` matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

/// Affine layer `x · W + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(
            format!("{prefix}.weight"),
            glorot_uniform(rng, input_dim, output_dim),
        );
        let bias = params.add(format!("{prefix}.bias"), Tensor::zeros(&[output_dim]));
        Dense {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, tape: &Tape, p: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, p.var(self.weight))?;
        tape.add_bias(xw, p.var(self.bias))
    }
}

/// Zero matrix on the tape, used for initial recurrent states.
pub(crate) fn zeros(tape: &Tape, rows: usize, cols: usize) -> Var {
    tape.constant(Tensor::zeros(&[rows, cols]))
}
