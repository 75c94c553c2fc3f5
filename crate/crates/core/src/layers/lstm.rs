use rand::Rng;

use super::{glorot_uniform, zeros, Dense};
use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// One gate's `x·W + h·U + b` parameters.
#[derive(Clone, Debug)]
pub struct Gate {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl Gate {
    fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        bias: f64,
        rng: &mut R,
    ) -> Self {
        Gate {
            w: params.add(
                format!("{prefix}.w"),
                glorot_uniform(rng, input_dim, hidden_dim),
            ),
            u: params.add(
                format!("{prefix}.u"),
                glorot_uniform(rng, hidden_dim, hidden_dim),
            ),
            b: params.add(format!("{prefix}.b"), Tensor::full(&[hidden_dim], bias)),
        }
    }

    /// Pre-activation `x·W + h·U + b`.
    pub(crate) fn affine(&self, tape: &Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let xw = tape.matmul(x, p.var(self.w))?;
        let hu = tape.matmul(h, p.var(self.u))?;
        let s = tape.add(xw, hu)?;
        tape.add_bias(s, p.var(self.b))
    }

    pub(crate) fn new_gate<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        Gate::new(params, prefix, input_dim, hidden_dim, 0.0, rng)
    }
}

/// LSTM cell with separate input, forget, output and candidate gates.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    pub candidate: Gate,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    /// Glorot weights, zero biases except the forget gate, which starts at 1.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        LstmCell {
            input: Gate::new(params, &format!("{prefix}.i"), input_dim, hidden_dim, 0.0, rng),
            forget: Gate::new(params, &format!("{prefix}.f"), input_dim, hidden_dim, 1.0, rng),
            output: Gate::new(params, &format!("{prefix}.o"), input_dim, hidden_dim, 0.0, rng),
            candidate: Gate::new(params, &format!("{prefix}.c"), input_dim, hidden_dim, 0.0, rng),
            input_dim,
            hidden_dim,
        }
    }

    /// One time step over a batch of rows:
    ///
    /// ```text
    /// i = σ(xW_i + hU_i + b_i)    f = σ(xW_f + hU_f + b_f)
    /// o = σ(xW_o + hU_o + b_o)    C̃ = tanh(xW_c + hU_c + b_c)
    /// c' = f⊙c + i⊙C̃             h' = o⊙tanh(c')
    /// ```
    pub fn step(&self, tape: &Tape, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let i = tape.sigmoid(self.input.affine(tape, p, x, h)?)?;
        let f = tape.sigmoid(self.forget.affine(tape, p, x, h)?)?;
        let o = tape.sigmoid(self.output.affine(tape, p, x, h)?)?;
        let cand = tape.tanh(self.candidate.affine(tape, p, x, h)?)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, cand)?;
        let c_next = tape.add(keep, write)?;
        let h_next = tape.mul(o, tape.tanh(c_next)?)?;
        Ok((h_next, c_next))
    }

    /// Run the cell over `steps` (each `[batch × input_dim]`) from zero state and
    /// return the hidden state after each step, in the order the steps were given.
    pub fn scan(&self, tape: &Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        let batch = steps
            .first()
            .map(|&s| tape.shape(s)[0])
            .ok_or_else(|| Error::Contract("LSTM scan over an empty sequence".into()))?;
        let mut h = zeros(tape, batch, self.hidden_dim);
        let mut c = zeros(tape, batch, self.hidden_dim);
        let mut out = Vec::with_capacity(steps.len());
        for &x in steps {
            (h, c) = self.step(tape, p, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Forward and backward LSTM scans whose per-step hidden states are
/// concatenated and projected to `embed_dim`.
#[derive(Clone, Debug)]
pub struct BiLstmLayer {
    pub forward_cell: LstmCell,
    pub backward_cell: LstmCell,
    pub projection: Dense,
}

impl BiLstmLayer {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        BiLstmLayer {
            forward_cell: LstmCell::new(params, &format!("{prefix}.fwd"), input_dim, hidden_dim, rng),
            backward_cell: LstmCell::new(params, &format!("{prefix}.bwd"), input_dim, hidden_dim, rng),
            projection: Dense::new(params, &format!("{prefix}.proj"), 2 * hidden_dim, embed_dim, rng),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.output_dim
    }

    /// Per-step `[h_fwd, h_bwd]`, each `[batch × 2·hidden]`, before projection.
    pub fn states(&self, tape: &Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        let fwd = self.forward_cell.scan(tape, p, steps)?;
        let reversed: Vec<Var> = steps.iter().rev().copied().collect();
        let mut bwd = self.backward_cell.scan(tape, p, &reversed)?;
        bwd.reverse();
        fwd.iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat_last(f, b))
            .collect()
    }

    /// Embeddings for every step, stacked time-major: row `t·batch + b`.
    pub fn forward_steps(&self, tape: &Tape, p: &Bound, steps: &[Var]) -> Result<Var> {
        let states = self.states(tape, p, steps)?;
        let stacked = tape.concat_rows(&states)?;
        self.projection.forward(tape, p, stacked)
    }

    /// Embed a single `[T × input_dim]` sequence into `[T × embed_dim]`.
    pub fn forward(&self, tape: &Tape, p: &Bound, seq: Var) -> Result<Var> {
        let shape = tape.shape(seq);
        if shape.len() != 2 || shape[1] != self.forward_cell.input_dim {
            return Err(Error::dim(
                "bilstm_forward",
                &shape,
                &[0, self.forward_cell.input_dim],
            ));
        }
        let steps = (0..shape[0])
            .map(|t| tape.slice_rows(seq, t, 1))
            .collect::<Result<Vec<_>>>()?;
        self.forward_steps(tape, p, &steps)
    }
}
