use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::glorot_uniform;
use crate::autodiff::{Bound, ParamId, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Noise process applied to embeddings before encoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Zero each element independently with probability `p`.
    ZeroMask { p: f64 },
    /// Add zero-mean Gaussian noise with standard deviation `sigma`.
    Gaussian { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionConfig {
    #[serde(flatten)]
    pub kind: CorruptionKind,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            kind: CorruptionKind::ZeroMask { p: 0.1 },
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn zero_mask(p: f64) -> Self {
        CorruptionConfig {
            kind: CorruptionKind::ZeroMask { p },
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        CorruptionConfig {
            kind: CorruptionKind::Gaussian { sigma },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CorruptionKind::ZeroMask { p } if !(0.0..=1.0).contains(&p) => Err(Error::Config(
                format!("mask probability {p} outside [0, 1]"),
            )),
            CorruptionKind::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("noise sigma {sigma} must be finite and ≥ 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self.kind {
            CorruptionKind::ZeroMask { p } => p == 0.0,
            CorruptionKind::Gaussian { sigma } => sigma == 0.0,
        }
    }

    /// The multiplicative mask or additive noise for a tensor of `shape`.
    fn sample<R: Rng + ?Sized>(&self, shape: &[usize], rng: &mut R) -> Tensor {
        let n: usize = shape.iter().product();
        let data = match self.kind {
            CorruptionKind::ZeroMask { p } => (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 })
                .collect(),
            CorruptionKind::Gaussian { sigma } => {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                (0..n).map(|_| normal.sample(rng)).collect()
            }
        };
        Tensor::new(shape.to_vec(), data).expect("shape from existing tensor")
    }

    /// Corrupt a value on the tape. The identity configuration records nothing.
    pub fn apply<R: Rng + ?Sized>(&self, tape: &Tape, x: Var, rng: &mut R) -> Result<Var> {
        if self.is_identity() {
            return Ok(x);
        }
        let noise = tape.constant(self.sample(&tape.shape(x), rng));
        match self.kind {
            CorruptionKind::ZeroMask { .. } => tape.mul(x, noise),
            CorruptionKind::Gaussian { .. } => tape.add(x, noise),
        }
    }
}

/// Apply the corruption function to a plain tensor.
pub fn corrupt<R: Rng + ?Sized>(x: &Tensor, cfg: &CorruptionConfig, rng: &mut R) -> Result<Tensor> {
    cfg.validate()?;
    if cfg.is_identity() {
        return Ok(x.clone());
    }
    let noise = cfg.sample(x.shape(), rng);
    let data = match cfg.kind {
        CorruptionKind::ZeroMask { .. } => x
            .data()
            .iter()
            .zip(noise.data())
            .map(|(&v, &keep)| if keep == 0.0 { 0.0 } else { v })
            .collect(),
        CorruptionKind::Gaussian { .. } => x
            .data()
            .iter()
            .zip(noise.data())
            .map(|(v, e)| v + e)
            .collect(),
    };
    Tensor::new(x.shape().to_vec(), data)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, tape: &Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Linear => Ok(x),
        }
    }
}

/// Denoising autoencoder: `h = s(x·W + b)`, `x̂ = s(h·W′ + b̂)`, applied row-wise.
#[derive(Clone, Debug)]
pub struct Dae {
    pub enc_weight: ParamId,
    pub enc_bias: ParamId,
    pub dec_weight: ParamId,
    pub dec_bias: ParamId,
    pub input_dim: usize,
    pub latent_dim: usize,
    pub activation: Activation,
    pub corruption: CorruptionConfig,
}

impl Dae {
    /// A bottleneck autoencoder; `latent_dim` must be smaller than `input_dim`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        latent_dim: usize,
        activation: Activation,
        corruption: CorruptionConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if latent_dim == 0 || latent_dim >= input_dim {
            return Err(Error::Config(format!(
                "autoencoder latent dim {latent_dim} must be in 1..{input_dim}"
            )));
        }
        corruption.validate()?;
        Ok(Self::build(
            params,
            prefix,
            glorot_uniform(rng, input_dim, latent_dim),
            glorot_uniform(rng, latent_dim, input_dim),
            activation,
            corruption,
        ))
    }

    /// Square linear autoencoder initialized to the identity map.
    pub fn identity(params: &mut ParamSet, prefix: &str, dim: usize) -> Self {
        Self::build(
            params,
            prefix,
            Tensor::identity(dim),
            Tensor::identity(dim),
            Activation::Linear,
            CorruptionConfig::zero_mask(0.0),
        )
    }

    fn build(
        params: &mut ParamSet,
        prefix: &str,
        enc: Tensor,
        dec: Tensor,
        activation: Activation,
        corruption: CorruptionConfig,
    ) -> Self {
        let (input_dim, latent_dim) = (enc.shape()[0], enc.shape()[1]);
        Dae {
            enc_weight: params.add(format!("{prefix}.enc.weight"), enc),
            enc_bias: params.add(format!("{prefix}.enc.bias"), Tensor::zeros(&[latent_dim])),
            dec_weight: params.add(format!("{prefix}.dec.weight"), dec),
            dec_bias: params.add(format!("{prefix}.dec.bias"), Tensor::zeros(&[input_dim])),
            input_dim,
            latent_dim,
            activation,
            corruption,
        }
    }

    pub fn encode(&self, tape: &Tape, p: &Bound, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, p.var(self.enc_weight))?;
        let z = tape.add_bias(xw, p.var(self.enc_bias))?;
        self.activation.apply(tape, z)
    }

    pub fn decode(&self, tape: &Tape, p: &Bound, h: Var) -> Result<Var> {
        let hw = tape.matmul(h, p.var(self.dec_weight))?;
        let z = tape.add_bias(hw, p.var(self.dec_bias))?;
        self.activation.apply(tape, z)
    }

    /// `(1/N) Σ_k ‖x_k − x̂_k‖²` over the `N` rows.
    pub fn loss(tape: &Tape, original: Var, reconstructed: Var) -> Result<Var> {
        let shape = tape.shape(original);
        let width = shape.last().copied().unwrap_or(1) as f64;
        let mean_sq = tape.mse(original, reconstructed)?;
        tape.scale(mean_sq, width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mask_extremes() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.5, -0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = corrupt(&x, &CorruptionConfig::zero_mask(0.0), &mut rng).unwrap();
        assert!(same.bit_eq(&x));
        let zeroed = corrupt(&x, &CorruptionConfig::zero_mask(1.0), &mut rng).unwrap();
        assert!(zeroed.data().iter().all(|&v| v == 0.0));
        let same = corrupt(&x, &CorruptionConfig::gaussian(0.0), &mut rng).unwrap();
        assert!(same.bit_eq(&x));
    }

    #[test]
    fn mask_frequency() {
        let x = Tensor::full(&[100_000], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = corrupt(&x, &CorruptionConfig::zero_mask(0.5), &mut rng).unwrap();
        let zeroed = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeroed - 0.5).abs() < 0.01, "zeroed fraction {zeroed}");
    }

    #[test]
    fn gaussian_noise_moments() {
        let x = Tensor::zeros(&[50_000]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = corrupt(&x, &CorruptionConfig::gaussian(0.2), &mut rng).unwrap();
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let sd = (y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.01);
        assert!((sd - 0.2).abs() < 0.01);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(CorruptionConfig::zero_mask(1.5).validate().is_err());
        assert!(CorruptionConfig::zero_mask(-0.1).validate().is_err());
        assert!(CorruptionConfig::gaussian(-1.0).validate().is_err());
        assert!(CorruptionConfig::gaussian(f64::NAN).validate().is_err());
    }

    #[test]
    fn zero_weights_encode_to_half() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dae = Dae::new(&mut ps, "dae", 3, 2, Activation::Sigmoid, CorruptionConfig::default(), &mut rng).unwrap();
        ps.set(dae.enc_weight, Tensor::zeros(&[3, 2])).unwrap();
        let tape = Tape::new();
        let b = ps.bind(&tape);
        let x = tape.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap());
        let h = dae.encode(&tape, &b, x).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.5));
        let back = dae.decode(&tape, &b, h).unwrap();
        assert_eq!(tape.shape(back), vec![2, 3]);
    }

    #[test]
    fn latent_must_shrink() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = CorruptionConfig::default();
        assert!(Dae::new(&mut ps, "a", 4, 4, Activation::Sigmoid, cfg, &mut rng).is_err());
        assert!(Dae::new(&mut ps, "b", 4, 0, Activation::Sigmoid, cfg, &mut rng).is_err());
    }

    #[test]
    fn reconstruction_loss_examples() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let z = tape.constant(Tensor::zeros(&[1, 2]));
        assert_eq!(tape.value(Dae::loss(&tape, x, z).unwrap()).item().unwrap(), 2.0);
        assert_eq!(tape.value(Dae::loss(&tape, x, x).unwrap()).item().unwrap(), 0.0);
        // squared row norms 2 and 4
        let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, 1.0, 2.0, 0.0]).unwrap());
        let z = tape.constant(Tensor::zeros(&[2, 2]));
        assert_eq!(tape.value(Dae::loss(&tape, x, z).unwrap()).item().unwrap(), 3.0);
        let bad = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(Dae::loss(&tape, x, bad).is_err());
    }
}
