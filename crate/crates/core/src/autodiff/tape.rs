//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every op appends one node holding its forward value plus whatever the
//! backward rule needs. Nodes only reference earlier nodes, so walking the
//! record backwards is a valid topological order.

use std::cell::RefCell;
use std::sync::Arc;

use super::params::{GradientMap, ParamId};
use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise functions available to [`Tape::unary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    Negate,
    Square,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Relu => x.max(0.0),
            Unary::Negate => -x,
            Unary::Square => x * x,
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Negate => -1.0,
            Unary::Square => 2.0 * x,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Backward rule for [`Tape::custom`]: maps the output gradient to one
/// gradient per input.
pub type CustomBackward = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

enum Op {
    Leaf(Option<ParamId>),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    SoftmaxRows(Var),
    ConcatLast(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    SliceLast { x: Var, start: usize },
    GatherRows { x: Var, index: Arc<[Option<usize>]> },
    Transpose(Var),
    Reshape(Var),
    Mse(Var, Var),
    Sum(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Single-writer record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn push(&self, name: &str, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(name.to_string()));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Ok(Var(nodes.len() - 1))
    }

    fn push_leaf(&self, value: Tensor, param: Option<ParamId>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf(param),
        });
        Var(nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&self, t: Tensor) -> Var {
        self.push_leaf(t, None)
    }

    /// Differentiable leaf tied to a parameter id.
    pub fn param(&self, id: ParamId, t: Tensor) -> Var {
        self.push_leaf(t, Some(id))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(Error::dim("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let out = matmul_nn(av.data(), bv.data(), m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    fn zip_same(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(name, av.shape(), bv.shape()));
        }
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(av.shape().to_vec(), out))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b))
    }

    /// `x + bias` with `bias` of shape `[cols(x)]` repeated over every row.
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rank() != 1 || xv.rank() == 0 || bv.len() != xv.cols() {
            return Err(Error::dim("add_bias", xv.shape(), bv.shape()));
        }
        let c = xv.cols();
        let out = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[i % c])
            .collect();
        self.push(
            "add_bias",
            Tensor::from_parts(xv.shape().to_vec(), out),
            Op::AddBias(x, bias),
        )
    }

    pub fn scale(&self, x: Var, factor: f64) -> Result<Var> {
        let t = self.value(x).map(|v| v * factor);
        self.push("scale", t, Op::Scale(x, factor))
    }

    pub fn unary(&self, x: Var, f: Unary) -> Result<Var> {
        let t = self.value(x).map(|v| f.apply(v));
        self.push("unary", t, Op::Unary(x, f))
    }

    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn tanh(&self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Tanh)
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Relu)
    }

    /// Softmax along the last axis, with row-max subtraction.
    pub fn softmax_rows(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(Error::dim("softmax_rows", xv.shape(), &[]));
        }
        let c = xv.cols();
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut total = 0.0;
            for &v in row {
                let e = (v - max).exp();
                total += e;
                out.push(e);
            }
            for o in &mut out[start..] {
                *o /= total;
            }
        }
        self.push(
            "softmax_rows",
            Tensor::from_parts(xv.shape().to_vec(), out),
            Op::SoftmaxRows(x),
        )
    }

    /// Concatenate along the last axis; all other extents must agree.
    pub fn concat_last(&self, a: Var, b: Var) -> Result<Var> {
        self.concat_last_many(&[a, b])
    }

    pub fn concat_last_many(&self, parts: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let first = values
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let lead = &first.shape()[..first.rank().saturating_sub(1)];
        for v in &values {
            if v.rank() == 0 || &v.shape()[..v.rank() - 1] != lead {
                return Err(Error::dim("concat_last", first.shape(), v.shape()));
            }
        }
        let rows = first.rows();
        let total: usize = values.iter().map(Tensor::cols).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                out.extend_from_slice(v.row(r));
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        self.push(
            "concat_last",
            Tensor::from_parts(shape, out),
            Op::ConcatLast(parts.to_vec()),
        )
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let first = values
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let cols = first.cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for v in &values {
            if v.rank() != 2 || v.cols() != cols {
                return Err(Error::dim("concat_rows", first.shape(), v.shape()));
            }
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        self.push(
            "concat_rows",
            Tensor::from_parts(vec![rows, cols], out),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || len == 0 || start + len > xv.rows() {
            return Err(Error::dim("slice_rows", xv.shape(), &[start, len]));
        }
        let c = xv.cols();
        let out = xv.data()[start * c..(start + len) * c].to_vec();
        self.push(
            "slice_rows",
            Tensor::from_parts(vec![len, c], out),
            Op::SliceRows { x, start },
        )
    }

    /// Columns `start..start + len` along the last axis.
    pub fn slice_last(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 || len == 0 || start + len > xv.cols() {
            return Err(Error::dim("slice_last", xv.shape(), &[start, len]));
        }
        let c = xv.cols();
        let mut out = Vec::with_capacity(xv.rows() * len);
        for row in xv.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        self.push(
            "slice_last",
            Tensor::from_parts(shape, out),
            Op::SliceLast { x, start },
        )
    }

    /// Build a matrix whose row `i` is row `index[i]` of `x`, or zeros for `None`.
    pub fn gather_rows(&self, x: Var, index: Arc<[Option<usize>]>) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || index.is_empty() {
            return Err(Error::dim("gather_rows", xv.shape(), &[index.len()]));
        }
        let c = xv.cols();
        let mut out = Vec::with_capacity(index.len() * c);
        for ix in index.iter() {
            match ix {
                Some(r) if *r < xv.rows() => out.extend_from_slice(xv.row(*r)),
                Some(r) => return Err(Error::dim("gather_rows", xv.shape(), &[*r])),
                None => out.extend(std::iter::repeat_n(0.0, c)),
            }
        }
        self.push(
            "gather_rows",
            Tensor::from_parts(vec![index.len(), c], out),
            Op::GatherRows { x, index },
        )
    }

    pub fn transpose(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::dim("transpose", xv.shape(), &[]));
        }
        let out = transpose_data(xv.data(), xv.rows(), xv.cols());
        self.push(
            "transpose",
            Tensor::from_parts(vec![xv.cols(), xv.rows()], out),
            Op::Transpose(x),
        )
    }

    pub fn reshape(&self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        self.push("reshape", t, Op::Reshape(x))
    }

    /// Mean of squared differences over all elements, as a scalar.
    pub fn mse(&self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.shape() != tv.shape() {
            return Err(Error::dim("mse", pv.shape(), tv.shape()));
        }
        let n = pv.len() as f64;
        let total: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.push("mse", Tensor::scalar(total / n), Op::Mse(pred, target))
    }

    pub fn sum(&self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    /// Normalize each row to zero mean and unit variance, then `· gamma + beta`.
    pub fn layer_norm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let c = xv.cols();
        if xv.rank() == 0 || gv.shape() != [c] || bv.shape() != [c] {
            return Err(Error::dim("layer_norm", xv.shape(), gv.shape()));
        }
        let mut normalized = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let nv = (v - mean) * inv;
                normalized.push(nv);
                out.push(nv * gv.data()[j] + bv.data()[j]);
            }
        }
        self.push(
            "layer_norm",
            Tensor::from_parts(xv.shape().to_vec(), out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        )
    }

    /// Record an op with a caller-supplied forward value and backward rule.
    pub fn custom(&self, inputs: &[Var], value: Tensor, backward: CustomBackward) -> Result<Var> {
        self.push(
            "custom",
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
        )
    }

    /// Gradient of scalar `loss` with respect to every parameter leaf on the tape.
    /// Parameters that do not influence `loss` get zero tensors.
    pub fn backward(&self, loss: Var) -> Result<GradientMap> {
        let nodes = self.nodes.borrow();
        let loss_node = nodes
            .get(loss.0)
            .ok_or_else(|| Error::Contract("loss is not on this tape".into()))?;
        if !loss_node.value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = GradientMap::default();

        for idx in (0..nodes.len()).rev() {
            let node = &nodes[idx];
            let g = match grads.get_mut(idx).and_then(Option::take) {
                Some(g) => g,
                None => {
                    if let Op::Leaf(Some(pid)) = node.op {
                        out.insert(pid, Tensor::zeros(node.value.shape()));
                    }
                    continue;
                }
            };
            let y = &node.value;
            let val = |v: Var| &nodes[v.0].value;
            let mut acc = Accumulator { grads: &mut grads };

            match &node.op {
                Op::Leaf(Some(pid)) => {
                    out.insert(*pid, Tensor::from_parts(y.shape().to_vec(), g));
                }
                Op::Leaf(None) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    acc.add(*a, &matmul_nt(&g, bv.data(), m, n, k));
                    acc.add(*b, &matmul_tn(av.data(), &g, m, k, n));
                }
                Op::Add(a, b) => {
                    acc.add(*a, &g);
                    acc.add(*b, &g);
                }
                Op::Sub(a, b) => {
                    acc.add(*a, &g);
                    acc.add_scaled(*b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let ga: Vec<f64> = g.iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    acc.add(*a, &ga);
                    acc.add(*b, &gb);
                }
                Op::AddBias(x, b) => {
                    let c = val(*b).len();
                    let mut gb = vec![0.0; c];
                    for row in g.chunks(c) {
                        for (s, v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    acc.add(*x, &g);
                    acc.add(*b, &gb);
                }
                Op::Scale(x, f) => acc.add_scaled(*x, &g, *f),
                Op::Unary(x, f) => {
                    let xv = val(*x);
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(xv.data().iter().zip(y.data()))
                        .map(|(gi, (&xi, &yi))| gi * f.derivative(xi, yi))
                        .collect();
                    acc.add(*x, &gx);
                }
                Op::SoftmaxRows(x) => {
                    let c = y.cols();
                    let mut gx = Vec::with_capacity(g.len());
                    for (gr, yr) in g.chunks(c).zip(y.data().chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        gx.extend(gr.iter().zip(yr).map(|(gi, yi)| yi * (gi - dot)));
                    }
                    acc.add(*x, &gx);
                }
                Op::ConcatLast(parts) => {
                    let total = y.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = val(*p).cols();
                        let mut gp = Vec::with_capacity(val(*p).len());
                        for row in g.chunks(total) {
                            gp.extend_from_slice(&row[offset..offset + w]);
                        }
                        acc.add(*p, &gp);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = val(*p).len();
                        acc.add(*p, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceRows { x, start } => {
                    let xv = val(*x);
                    let c = xv.cols();
                    let mut gx = vec![0.0; xv.len()];
                    gx[start * c..start * c + g.len()].copy_from_slice(&g);
                    acc.add(*x, &gx);
                }
                Op::SliceLast { x, start } => {
                    let xv = val(*x);
                    let (c, w) = (xv.cols(), y.cols());
                    let mut gx = vec![0.0; xv.len()];
                    for (dst, src) in gx.chunks_mut(c).zip(g.chunks(w)) {
                        dst[*start..start + w].copy_from_slice(src);
                    }
                    acc.add(*x, &gx);
                }
                Op::GatherRows { x, index } => {
                    let xv = val(*x);
                    let c = xv.cols();
                    let mut gx = vec![0.0; xv.len()];
                    for (i, ix) in index.iter().enumerate() {
                        if let Some(r) = ix {
                            for (d, s) in gx[r * c..(r + 1) * c].iter_mut().zip(&g[i * c..(i + 1) * c]) {
                                *d += s;
                            }
                        }
                    }
                    acc.add(*x, &gx);
                }
                Op::Transpose(x) => {
                    acc.add(*x, &transpose_data(&g, y.rows(), y.cols()));
                }
                Op::Reshape(x) => acc.add(*x, &g),
                Op::Mse(p, t) => {
                    let (pv, tv) = (val(*p), val(*t));
                    let k = 2.0 * g[0] / pv.len() as f64;
                    let gp: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(tv.data())
                        .map(|(a, b)| k * (a - b))
                        .collect();
                    acc.add(*p, &gp);
                    acc.add_scaled(*t, &gp, -1.0);
                }
                Op::Sum(x) => {
                    let n = val(*x).len();
                    acc.add(*x, &vec![g[0]; n]);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let gv = val(*gamma);
                    let c = gv.len();
                    let cf = c as f64;
                    let mut ggamma = vec![0.0; c];
                    let mut gbeta = vec![0.0; c];
                    let mut gx = Vec::with_capacity(g.len());
                    for ((gr, nr), &inv) in g.chunks(c).zip(normalized.chunks(c)).zip(inv_std) {
                        let mut sum_d = 0.0;
                        let mut sum_dn = 0.0;
                        for j in 0..c {
                            ggamma[j] += gr[j] * nr[j];
                            gbeta[j] += gr[j];
                            let d = gr[j] * gv.data()[j];
                            sum_d += d;
                            sum_dn += d * nr[j];
                        }
                        for j in 0..c {
                            let d = gr[j] * gv.data()[j];
                            gx.push(inv / cf * (cf * d - sum_d - nr[j] * sum_dn));
                        }
                    }
                    acc.add(*x, &gx);
                    acc.add(*gamma, &ggamma);
                    acc.add(*beta, &gbeta);
                }
                Op::Custom { inputs, backward } => {
                    let go = Tensor::from_parts(y.shape().to_vec(), g);
                    let gs = backward(&go);
                    if gs.len() != inputs.len() {
                        return Err(Error::Contract(format!(
                            "custom backward returned {} gradients for {} inputs",
                            gs.len(),
                            inputs.len()
                        )));
                    }
                    for (input, gi) in inputs.iter().zip(&gs) {
                        if gi.shape() != val(*input).shape() {
                            return Err(Error::dim("custom backward", val(*input).shape(), gi.shape()));
                        }
                        acc.add(*input, gi.data());
                    }
                }
            }
        }
        Ok(out)
    }
}

struct Accumulator<'a> {
    grads: &'a mut Vec<Option<Vec<f64>>>,
}

impl Accumulator<'_> {
    fn add(&mut self, v: Var, g: &[f64]) {
        self.add_scaled(v, g, 1.0);
    }

    fn add_scaled(&mut self, v: Var, g: &[f64], factor: f64) {
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.iter_mut().zip(g) {
                    *e += factor * x;
                }
            }
            slot @ None => {
                *slot = Some(g.iter().map(|x| factor * x).collect());
            }
        }
    }
}

fn transpose_data(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamSet;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let tape = Tape::new();
        let a = tape.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let i = tape.constant(Tensor::identity(2));
        let b = tape.constant(mat(2, 2, &[5.0, 6.0, 7.0, 8.0]));
        assert_eq!(tape.value(tape.matmul(a, i).unwrap()).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            tape.value(tape.matmul(a, b).unwrap()).data(),
            &[19.0, 22.0, 43.0, 50.0]
        );
    }

    #[test]
    fn matmul_rejects_mismatched_inner_extent() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn unary_values() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, -2.0, 3.0]).unwrap());
        assert_eq!(tape.value(tape.sigmoid(x).unwrap()).data()[0], 0.5);
        assert_eq!(tape.value(tape.tanh(x).unwrap()).data()[0], 0.0);
        assert_eq!(tape.value(tape.relu(x).unwrap()).data(), &[0.0, 0.0, 3.0]);
        assert_eq!(
            tape.value(tape.unary(x, Unary::Negate).unwrap()).data(),
            &[-0.0, 2.0, -3.0]
        );
        assert_eq!(
            tape.value(tape.unary(x, Unary::Square).unwrap()).data(),
            &[0.0, 4.0, 9.0]
        );
    }

    #[test]
    fn softmax_examples() {
        let tape = Tape::new();
        let x = tape.constant(mat(2, 3, &[2.0, 2.0, 2.0, 0.0, 3f64.ln(), 0.0]));
        let y = tape.value(tape.softmax_rows(x).unwrap());
        for v in &y.data()[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = tape.constant(mat(1, 2, &[0.0, 3f64.ln()]));
        let y = tape.value(tape.softmax_rows(x).unwrap());
        assert!((y.data()[0] - 0.25).abs() < 1e-15);
        assert!((y.data()[1] - 0.75).abs() < 1e-15);
        let x = tape.constant(mat(1, 1, &[-42.0]));
        assert_eq!(tape.value(tape.softmax_rows(x).unwrap()).data(), &[1.0]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let tape = Tape::new();
        let x = tape.constant(mat(1, 2, &[1000.0, 1000.0]));
        assert_eq!(tape.value(tape.softmax_rows(x).unwrap()).data(), &[0.5, 0.5]);
    }

    #[test]
    fn concat_last_layouts() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[1, 2]));
        let b = tape.constant(Tensor::zeros(&[1, 3]));
        assert_eq!(tape.shape(tape.concat_last(a, b).unwrap()), vec![1, 5]);

        let a = tape.constant(mat(2, 1, &[1.0, 2.0]));
        let b = tape.constant(mat(2, 1, &[3.0, 4.0]));
        let c = tape.value(tape.concat_last(a, b).unwrap());
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[1.0, 3.0, 2.0, 4.0]);

        let a = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.concat_last(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mse_examples() {
        let tape = Tape::new();
        let p = tape.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
        let t = tape.constant(Tensor::vector(vec![3.0, 4.0]).unwrap());
        assert_eq!(tape.value(tape.mse(p, t).unwrap()).item().unwrap(), 12.5);
        assert_eq!(tape.value(tape.mse(t, t).unwrap()).item().unwrap(), 0.0);
        let p = tape.constant(Tensor::vector(vec![1.0]).unwrap());
        let t = tape.constant(Tensor::vector(vec![0.0]).unwrap());
        assert_eq!(tape.value(tape.mse(p, t).unwrap()).item().unwrap(), 1.0);
        let bad = tape.constant(Tensor::vector(vec![0.0, 1.0, 2.0]).unwrap());
        assert!(tape.mse(p, bad).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut ps = ParamSet::new();
        let x_id = ps.add("x", Tensor::scalar(3.0));
        let v_id = ps.add("v", Tensor::vector(vec![1.0, 2.0]).unwrap());
        let unused = ps.add("unused", Tensor::zeros(&[2, 3]));
        let tape = Tape::new();
        let b = ps.bind(&tape);

        let sq = tape.unary(b.var(x_id), Unary::Square).unwrap();
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads.get(x_id).unwrap().data(), &[6.0]);

        let zero = tape.constant(Tensor::zeros(&[2]));
        let loss = tape.mse(b.var(v_id), zero).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(v_id).unwrap().data(), &[1.0, 2.0]);
        let g = grads.get(unused).unwrap();
        assert_eq!(g.shape(), &[2, 3]);
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert_eq!(grads.len(), 3);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn fan_out_gradients_accumulate() {
        let mut ps = ParamSet::new();
        let id = ps.add("x", Tensor::vector(vec![2.0]).unwrap());
        let tape = Tape::new();
        let b = ps.bind(&tape);
        let x = b.var(id);
        // x*x + x  →  2x + 1 = 5
        let sq = tape.mul(x, x).unwrap();
        let y = tape.add(sq, x).unwrap();
        let loss = tape.sum(y).unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(id).unwrap().data(), &[5.0]);
    }

    #[test]
    fn nan_is_reported() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![f64::MAX]).unwrap());
        assert!(matches!(tape.unary(x, Unary::Square), Err(Error::Numeric(_))));
    }

    #[test]
    fn gather_with_zero_rows() {
        let tape = Tape::new();
        let x = tape.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let idx: Arc<[Option<usize>]> = vec![None, Some(1), Some(0)].into();
        let y = tape.value(tape.gather_rows(x, idx).unwrap());
        assert_eq!(y.data(), &[0.0, 0.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let tape = Tape::new();
        let x = tape.constant(mat(2, 4, &[1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 5.0, 10.0]));
        let g = tape.constant(Tensor::full(&[4], 1.0));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = tape.value(tape.layer_norm(x, g, b, 1e-5).unwrap());
        for r in 0..2 {
            let row = y.row(r);
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
