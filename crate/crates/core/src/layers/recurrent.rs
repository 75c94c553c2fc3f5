use rand::Rng;

use super::lstm::Gate;
use super::zeros;
use crate::autodiff::{Bound, ParamSet, Tape, Var};
use crate::error::{Error, Result};

fn batch_of(tape: &Tape, steps: &[Var]) -> Result<usize> {
    steps
        .first()
        .map(|&s| tape.shape(s)[0])
        .ok_or_else(|| Error::Contract("recurrent scan over an empty sequence".into()))
}

/// Elman recurrence `h' = tanh(xW + hU + b)`.
#[derive(Clone, Debug)]
pub struct RnnCell {
    pub gate: Gate,
    pub hidden_dim: usize,
}

impl RnnCell {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        RnnCell {
            gate: Gate::new_gate(params, prefix, input_dim, hidden_dim, rng),
            hidden_dim,
        }
    }

    pub fn step(&self, tape: &Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        tape.tanh(self.gate.affine(tape, p, x, h)?)
    }

    pub fn scan(&self, tape: &Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        let mut h = zeros(tape, batch_of(tape, steps)?, self.hidden_dim);
        let mut out = Vec::with_capacity(steps.len());
        for &x in steps {
            h = self.step(tape, p, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Gated recurrent unit with update gate `z` and reset gate `r`:
///
/// ```text
/// z = σ(xW_z + hU_z + b_z)    r = σ(xW_r + hU_r + b_r)
/// n = tanh(xW_n + (r⊙h)U_n + b_n)
/// h' = (1 − z)⊙n + z⊙h  =  n + z⊙(h − n)
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        GruCell {
            update: Gate::new_gate(params, &format!("{prefix}.z"), input_dim, hidden_dim, rng),
            reset: Gate::new_gate(params, &format!("{prefix}.r"), input_dim, hidden_dim, rng),
            candidate: Gate::new_gate(params, &format!("{prefix}.n"), input_dim, hidden_dim, rng),
            hidden_dim,
        }
    }

    pub fn step(&self, tape: &Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let z = tape.sigmoid(self.update.affine(tape, p, x, h)?)?;
        let r = tape.sigmoid(self.reset.affine(tape, p, x, h)?)?;
        let rh = tape.mul(r, h)?;
        let n = tape.tanh(self.candidate.affine(tape, p, x, rh)?)?;
        let diff = tape.sub(h, n)?;
        let carried = tape.mul(z, diff)?;
        tape.add(n, carried)
    }

    pub fn scan(&self, tape: &Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        let mut h = zeros(tape, batch_of(tape, steps)?, self.hidden_dim);
        let mut out = Vec::with_capacity(steps.len());
        for &x in steps {
            h = self.step(tape, p, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}
