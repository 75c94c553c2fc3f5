use rand::Rng;

use super::glorot_uniform;
use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};

/// Row-softmaxed scores `softmax(Q·Kᵀ / √d_qk)`.
pub fn attention_weights(tape: &Tape, q: Var, k: Var) -> Result<Var> {
    let (qs, ks) = (tape.shape(q), tape.shape(k));
    if qs.len() != 2 || ks.len() != 2 || qs[1] != ks[1] {
        return Err(Error::dim("attention", &qs, &ks));
    }
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (qs[1] as f64).sqrt())?;
    tape.softmax_rows(scaled)
}

/// Scaled dot-product attention `softmax(Q·Kᵀ / √d_qk) · V` for one sequence.
/// `V` holds one row per key.
pub fn attention(tape: &Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let (ks, vs) = (tape.shape(k), tape.shape(v));
    if vs.len() != 2 || vs[0] != ks[0] {
        return Err(Error::dim("attention", &ks, &vs));
    }
    let weights = attention_weights(tape, q, k)?;
    tape.matmul(weights, v)
}

#[derive(Clone, Debug)]
pub struct HeadProjection {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

/// Multi-head self-attention with per-head `[d_model × d_qk]` projections and a
/// shared output projection `[heads·d_qk × d_model]`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: Vec<HeadProjection>,
    pub output: ParamId,
    pub d_model: usize,
    pub d_qk: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        d_model: usize,
        num_heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_heads == 0 || !d_model.is_multiple_of(num_heads) {
            return Err(Error::Config(format!(
                "model dimension {d_model} is not divisible by {num_heads} heads"
            )));
        }
        let d_qk = d_model / num_heads;
        let heads = (0..num_heads)
            .map(|h| HeadProjection {
                query: params.add(format!("{prefix}.h{h}.wq"), glorot_uniform(rng, d_model, d_qk)),
                key: params.add(format!("{prefix}.h{h}.wk"), glorot_uniform(rng, d_model, d_qk)),
                value: params.add(format!("{prefix}.h{h}.wv"), glorot_uniform(rng, d_model, d_qk)),
            })
            .collect();
        let output = params.add(format!("{prefix}.wo"), glorot_uniform(rng, d_model, d_model));
        Ok(MultiHeadAttention {
            heads,
            output,
            d_model,
            d_qk,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// Self-attention over `x` holding consecutive sequences of `seq_len` rows
    /// each; attention never crosses a sequence boundary.
    pub fn forward(&self, tape: &Tape, p: &Bound, x: Var, seq_len: usize) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.d_model || seq_len == 0 || !shape[0].is_multiple_of(seq_len) {
            return Err(Error::dim("mha_forward", &shape, &[seq_len, self.d_model]));
        }
        let sequences = shape[0] / seq_len;
        let mut head_outputs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = tape.matmul(x, p.var(head.query))?;
            let k = tape.matmul(x, p.var(head.key))?;
            let v = tape.matmul(x, p.var(head.value))?;
            let out = if sequences == 1 {
                attention(tape, q, k, v)?
            } else {
                let per_seq = (0..sequences)
                    .map(|s| {
                        let start = s * seq_len;
                        attention(
                            tape,
                            tape.slice_rows(q, start, seq_len)?,
                            tape.slice_rows(k, start, seq_len)?,
                            tape.slice_rows(v, start, seq_len)?,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                tape.concat_rows(&per_seq)?
            };
            head_outputs.push(out);
        }
        let joined = if head_outputs.len() == 1 {
            head_outputs[0]
        } else {
            tape.concat_last_many(&head_outputs)?
        };
        tape.matmul(joined, p.var(self.output))
    }
}
