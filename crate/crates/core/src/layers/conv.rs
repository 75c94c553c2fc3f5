use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// 1-D convolution with left (causal) zero padding, so output length equals
/// input length: `y[t] = Σ_j x[t−j]·W_j + b` over taps `j < kernel`.
#[derive(Clone, Debug)]
pub struct CausalConv1d {
    pub taps: Vec<ParamId>,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl CausalConv1d {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        // Glorot bound over the full receptive field (in_channels · kernel).
        let limit = (6.0 / (in_channels * kernel + out_channels) as f64).sqrt();
        let taps = (0..kernel)
            .map(|j| {
                let data = (0..in_channels * out_channels)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                params.add(
                    format!("{prefix}.tap{j}"),
                    Tensor::from_parts(vec![in_channels, out_channels], data),
                )
            })
            .collect();
        CausalConv1d {
            taps,
            bias: params.add(format!("{prefix}.bias"), Tensor::zeros(&[out_channels])),
            in_channels,
            out_channels,
        }
    }

    pub fn kernel(&self) -> usize {
        self.taps.len()
    }

    /// `x` stacks sequences of `seq_len` rows (sequence-major).
    pub fn forward(&self, tape: &Tape, p: &Bound, x: Var, seq_len: usize) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.in_channels || seq_len == 0 || !shape[0].is_multiple_of(seq_len) {
            return Err(Error::dim("causal_conv1d", &shape, &[seq_len, self.in_channels]));
        }
        let rows = shape[0];
        let mut acc: Option<Var> = None;
        for (lag, &tap) in self.taps.iter().enumerate() {
            let shifted = if lag == 0 {
                x
            } else {
                let index: Arc<[Option<usize>]> = (0..rows)
                    .map(|r| (r % seq_len >= lag).then(|| r - lag))
                    .collect();
                tape.gather_rows(x, index)?
            };
            let term = tape.matmul(shifted, p.var(tap))?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        let sum = acc.ok_or_else(|| Error::Config("convolution with zero taps".into()))?;
        tape.add_bias(sum, p.var(self.bias))
    }
}
