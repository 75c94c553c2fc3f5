use super::params::{Bound, ParamId, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so that gradients that are
/// zero up to rounding compare by absolute difference instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ElementCheck {
    pub param: ParamId,
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub elements: Vec<ElementCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.elements.iter().all(|e| e.pass)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.elements.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ElementCheck> {
        self.elements.iter().filter(|e| !e.pass)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn eval_scalar<F>(f: &F, params: &ParamSet) -> Result<f64>
where
    F: Fn(&Tape, &Bound) -> Result<Var>,
{
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = f(&tape, &bound)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}

/// Compare reverse-mode gradients of `f` against central differences
/// `(f(x+h) - f(x-h)) / 2h`, element by element over every parameter.
pub fn grad_check<F>(f: F, params: &ParamSet, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &Bound) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::Contract(format!("step h must be positive, got {h}")));
    }
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = f(&tape, &bound)?;
    let grads = tape.backward(out)?;

    let mut probe = params.clone();
    let mut elements = Vec::new();
    for (id, name, tensor) in params.iter() {
        let analytic = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tensor.shape()));
        for index in 0..tensor.len() {
            let base = tensor.data()[index];
            let mut at = |delta: f64| -> Result<f64> {
                let mut data = tensor.to_vec();
                data[index] = base + delta;
                probe.set(id, Tensor::new(tensor.shape().to_vec(), data)?)?;
                eval_scalar(&f, &probe)
            };
            let plus = at(h)?;
            let minus = at(-h)?;
            probe.set(id, tensor.clone())?;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[index];
            let rel_error = relative_error(a, numeric);
            elements.push(ElementCheck {
                param: id,
                name: name.to_string(),
                index,
                analytic: a,
                numeric,
                rel_error,
                pass: rel_error <= tol,
            });
        }
    }
    Ok(GradCheckReport { elements })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Unary;

    #[test]
    fn square_passes() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::scalar(1.5));
        let report = grad_check(
            |tape, b| tape.unary(b.var(x), Unary::Square),
            &ps,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(report.passed());
        assert!((report.elements[0].analytic - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_passes() {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::vector(vec![1.0, -2.0]).unwrap());
        let report = grad_check(
            |tape, _| Ok(tape.constant(Tensor::scalar(7.0))),
            &ps,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(report.passed());
        assert!(report.elements.iter().all(|e| e.analytic == 0.0 && e.numeric == 0.0));
    }

    #[test]
    fn corrupted_backward_rule_fails() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::vector(vec![0.7, -1.3]).unwrap());
        // y = x², but the recorded rule claims dy/dx = 3x.
        let report = grad_check(
            |tape, b| {
                let xv = tape.value(b.var(x));
                let y = xv.map(|v| v * v);
                let captured = xv.clone();
                let sq = tape.custom(
                    &[b.var(x)],
                    y,
                    Box::new(move |g| {
                        vec![Tensor::from_parts(
                            g.shape().to_vec(),
                            g.data()
                                .iter()
                                .zip(captured.data())
                                .map(|(gi, xi)| gi * 3.0 * xi)
                                .collect(),
                        )]
                    }),
                )?;
                tape.sum(sq)
            },
            &ps,
            1e-6,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().count(), 2);
    }

    #[test]
    fn non_scalar_function_is_rejected() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::vector(vec![1.0, 2.0]).unwrap());
        let err = grad_check(|_, b| Ok(b.var(x)), &ps, 1e-6, 1e-4).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
