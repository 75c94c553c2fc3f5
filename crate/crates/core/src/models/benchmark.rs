use rand::Rng;

use super::features::Batch;
use super::{load_step_vars, load_window_major, Hyperparams, ModelKind};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::Result;
use crate::layers::{CausalConv1d, Dense, EncoderBlock, GruCell, LstmCell, RnnCell};

/// Standard sinusoidal positional encoding `[seq_len × d_model]`.
pub fn sinusoidal_encoding(seq_len: usize, d_model: usize) -> Tensor {
    let data = (0..seq_len)
        .flat_map(|pos| {
            (0..d_model).map(move |i| {
                let angle = pos as f64 / 10000f64.powf((i / 2 * 2) as f64 / d_model as f64);
                if i % 2 == 0 {
                    angle.sin()
                } else {
                    angle.cos()
                }
            })
        })
        .collect();
    Tensor::from_parts(vec![seq_len, d_model], data)
}

/// Encoder-only transformer over the load column with sinusoidal positions.
#[derive(Clone, Debug)]
pub struct TransformerNet {
    pub input: Dense,
    pub encoders: Vec<EncoderBlock>,
    pub head: Dense,
    pub d_model: usize,
}

impl TransformerNet {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, hp: &Hyperparams, rng: &mut R) -> Result<Self> {
        let d = hp.model_dim;
        let input = Dense::new(params, "input", 1, d, rng);
        let encoders = (0..hp.num_layers)
            .map(|i| EncoderBlock::new(params, &format!("enc{i}"), d, hp.num_heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Dense::new(params, "head", hp.lookback * d, hp.horizon, rng);
        Ok(TransformerNet {
            input,
            encoders,
            head,
            d_model: d,
        })
    }

    pub(super) fn pre_head(&self, tape: &Tape, p: &Bound, batch: &Batch) -> Result<Var> {
        let (b, l, d) = (batch.size(), batch.lookback(), self.d_model);
        let x = load_window_major(tape, batch);
        let projected = self.input.forward(tape, p, x)?;
        let pe = sinusoidal_encoding(l, d);
        let tiled: Vec<f64> = (0..b).flat_map(|_| pe.data().iter().copied()).collect();
        let mut x = tape.add(projected, tape.constant(Tensor::from_parts(vec![b * l, d], tiled)))?;
        for (i, block) in self.encoders.iter().enumerate() {
            x = block
                .forward(tape, p, x, l)
                .map_err(|e| e.in_stage(&format!("encoder{i}")))?;
        }
        tape.reshape(x, vec![b, l * d])
    }
}

#[derive(Clone, Debug)]
pub enum RecurrentLayer {
    Rnn(RnnCell),
    Lstm(LstmCell),
    Gru(GruCell),
}

impl RecurrentLayer {
    fn scan(&self, tape: &Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        match self {
            RecurrentLayer::Rnn(c) => c.scan(tape, p, steps),
            RecurrentLayer::Lstm(c) => c.scan(tape, p, steps),
            RecurrentLayer::Gru(c) => c.scan(tape, p, steps),
        }
    }
}

/// Stacked recurrent layers over the load column; the last hidden state of the
/// top layer feeds the head.
#[derive(Clone, Debug)]
pub struct RecurrentNet {
    pub layers: Vec<RecurrentLayer>,
    pub head: Dense,
}

impl RecurrentNet {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        kind: ModelKind,
        hp: &Hyperparams,
        rng: &mut R,
    ) -> Self {
        let width = hp.model_dim;
        let layers = (0..hp.num_layers)
            .map(|i| {
                let input = if i == 0 { 1 } else { width };
                let prefix = format!("{}{i}", kind.name());
                match kind {
                    ModelKind::Rnn => RecurrentLayer::Rnn(RnnCell::new(params, &prefix, input, width, rng)),
                    ModelKind::Gru => RecurrentLayer::Gru(GruCell::new(params, &prefix, input, width, rng)),
                    _ => RecurrentLayer::Lstm(LstmCell::new(params, &prefix, input, width, rng)),
                }
            })
            .collect();
        let head = Dense::new(params, "head", width, hp.horizon, rng);
        RecurrentNet { layers, head }
    }

    pub(super) fn pre_head(&self, tape: &Tape, p: &Bound, batch: &Batch) -> Result<Var> {
        let mut seq = load_step_vars(tape, batch);
        for (i, layer) in self.layers.iter().enumerate() {
            seq = layer
                .scan(tape, p, &seq)
                .map_err(|e| e.in_stage(&format!("recurrent{i}")))?;
        }
        Ok(*seq.last().expect("lookback is positive"))
    }
}

pub const CONV_KERNEL: usize = 3;

/// Two causal convolutions with relu, flattened into the head.
#[derive(Clone, Debug)]
pub struct ConvNet {
    pub conv1: CausalConv1d,
    pub conv2: CausalConv1d,
    pub head: Dense,
    pub channels: usize,
}

impl ConvNet {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, hp: &Hyperparams, rng: &mut R) -> Self {
        let c = hp.model_dim;
        ConvNet {
            conv1: CausalConv1d::new(params, "conv1", 1, c, CONV_KERNEL, rng),
            conv2: CausalConv1d::new(params, "conv2", c, c, CONV_KERNEL, rng),
            head: Dense::new(params, "head", hp.lookback * c, hp.horizon, rng),
            channels: c,
        }
    }

    pub(super) fn pre_head(&self, tape: &Tape, p: &Bound, batch: &Batch) -> Result<Var> {
        let (b, l) = (batch.size(), batch.lookback());
        let x = load_window_major(tape, batch);
        let h1 = tape.relu(self.conv1.forward(tape, p, x, l)?)?;
        let h2 = tape.relu(self.conv2.forward(tape, p, h1, l)?)?;
        tape.reshape(h2, vec![b, l * self.channels])
    }
}
