//! Reverse-mode gradient recording.
//!
//! A [`Tape`] owns every intermediate value. Operations append a node and
//! return a [`Var`] handle; nodes are stored in creation order, which is a
//! topological order, so [`Tape::backward`] simply walks the list in reverse.

use crate::error::{Error, Result};

use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise functions with a recorded derivative.
///
/// The `*Sqrt` variants take `s = t²` and evaluate a function of `t = √s`
/// that is smooth in `s`; they are what the hyperbolic maps are built from,
/// since they have no singularity at the zero vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    /// Requires inputs in `(-1, 1)`.
    Artanh,
    Exp,
    /// Requires positive inputs.
    Ln,
    Sqrt,
    Square,
    Cosh,
    Sinh,
    Asinh,
    /// `cosh(√s)`.
    CoshSqrt,
    /// `sinh(√s) / √s`.
    SinhcSqrt,
    /// `tanh(√s) / √s`, saturating at `√s = t_max`: beyond it the value is
    /// `tanh(t_max) / √s`, so that `f(‖v‖²)·v` never leaves a ball of
    /// radius `tanh(t_max)`.
    TanhcSqrt { t_max: f64 },
    /// `artanh(√s) / √s`; `√s` is clamped to `1 - 1e-15`.
    ArtanhcSqrt,
    /// `asinh(√s) / √s`.
    AsinhcSqrt,
    /// `arcosh(a) / √(a² - 1)`; `a` is clamped to `≥ 1`.
    ArcoshRatio,
}

const SERIES_CUTOFF: f64 = 1e-3;
const ARTANH_MAX: f64 = 1.0 - 1e-15;

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Artanh => "artanh",
            Unary::Exp => "exp",
            Unary::Ln => "ln",
            Unary::Sqrt => "sqrt",
            Unary::Square => "square",
            Unary::Cosh => "cosh",
            Unary::Sinh => "sinh",
            Unary::Asinh => "asinh",
            Unary::CoshSqrt => "cosh_sqrt",
            Unary::SinhcSqrt => "sinhc_sqrt",
            Unary::TanhcSqrt { .. } => "tanhc_sqrt",
            Unary::ArtanhcSqrt => "artanhc_sqrt",
            Unary::AsinhcSqrt => "asinhc_sqrt",
            Unary::ArcoshRatio => "arcosh_ratio",
        }
    }

    fn check_domain(self, x: f64) -> Result<()> {
        let ok = match self {
            Unary::Artanh => x > -1.0 && x < 1.0,
            Unary::Ln => x > 0.0,
            Unary::Sqrt => x >= 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{} is outside the domain of {}", x, self.name())))
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Artanh => x.atanh(),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Cosh => x.cosh(),
            Unary::Sinh => x.sinh(),
            Unary::Asinh => x.asinh(),
            Unary::CoshSqrt => x.max(0.0).sqrt().cosh(),
            Unary::SinhcSqrt => {
                let s = x.max(0.0);
                if s < SERIES_CUTOFF {
                    poly(&[1.0, 1.0 / 6.0, 1.0 / 120.0, 1.0 / 5040.0, 1.0 / 362880.0], s)
                } else {
                    let t = s.sqrt();
                    t.sinh() / t
                }
            }
            Unary::TanhcSqrt { t_max } => {
                let s = x.max(0.0);
                let t = s.sqrt();
                if t > t_max {
                    t_max.tanh() / t
                } else if s < SERIES_CUTOFF {
                    poly(&[1.0, -1.0 / 3.0, 2.0 / 15.0, -17.0 / 315.0, 62.0 / 2835.0], s)
                } else {
                    t.tanh() / t
                }
            }
            Unary::ArtanhcSqrt => {
                let s = x.max(0.0);
                if s < SERIES_CUTOFF {
                    poly(&[1.0, 1.0 / 3.0, 1.0 / 5.0, 1.0 / 7.0, 1.0 / 9.0], s)
                } else {
                    let t = s.sqrt().min(ARTANH_MAX);
                    t.atanh() / t
                }
            }
            Unary::AsinhcSqrt => {
                let s = x.max(0.0);
                if s < SERIES_CUTOFF {
                    poly(&[1.0, -1.0 / 6.0, 3.0 / 40.0, -5.0 / 112.0, 35.0 / 1152.0], s)
                } else {
                    let t = s.sqrt();
                    t.asinh() / t
                }
            }
            Unary::ArcoshRatio => {
                let e = (x - 1.0).max(0.0);
                if e < SERIES_CUTOFF {
                    poly(&[1.0, -1.0 / 3.0, 2.0 / 15.0, -2.0 / 35.0, 8.0 / 315.0], e)
                } else {
                    let a = 1.0 + e;
                    a.acosh() / (a * a - 1.0).sqrt()
                }
            }
        }
    }

    /// Derivative at `x`, given the forward value `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Artanh => 1.0 / (1.0 - x * x),
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Cosh => x.sinh(),
            Unary::Sinh => x.cosh(),
            Unary::Asinh => 1.0 / (1.0 + x * x).sqrt(),
            Unary::CoshSqrt => {
                if x < 0.0 {
                    return 0.0;
                }
                0.5 * Unary::SinhcSqrt.eval(x)
            }
            Unary::SinhcSqrt => {
                if x < 0.0 {
                    return 0.0;
                }
                if x < SERIES_CUTOFF {
                    poly(&[1.0 / 6.0, 1.0 / 60.0, 1.0 / 1680.0, 1.0 / 90720.0, 1.0 / 7983360.0], x)
                } else {
                    let t = x.sqrt();
                    (t * t.cosh() - t.sinh()) / (2.0 * t * t * t)
                }
            }
            Unary::TanhcSqrt { t_max } => {
                if x < 0.0 {
                    return 0.0;
                }
                let t = x.sqrt();
                if t > t_max {
                    -t_max.tanh() / (2.0 * t * t * t)
                } else if x < SERIES_CUTOFF {
                    poly(&[-1.0 / 3.0, 4.0 / 15.0, -17.0 / 105.0, 248.0 / 2835.0, -1382.0 / 31185.0], x)
                } else {
                    let th = t.tanh();
                    (t * (1.0 - th * th) - th) / (2.0 * t * t * t)
                }
            }
            Unary::ArtanhcSqrt => {
                if x < 0.0 {
                    return 0.0;
                }
                if x < SERIES_CUTOFF {
                    poly(&[1.0 / 3.0, 2.0 / 5.0, 3.0 / 7.0, 4.0 / 9.0, 5.0 / 11.0], x)
                } else {
                    let t = x.sqrt();
                    if t >= ARTANH_MAX {
                        return 0.0;
                    }
                    (t / (1.0 - t * t) - t.atanh()) / (2.0 * t * t * t)
                }
            }
            Unary::AsinhcSqrt => {
                if x < 0.0 {
                    return 0.0;
                }
                if x < SERIES_CUTOFF {
                    poly(&[-1.0 / 6.0, 3.0 / 20.0, -15.0 / 112.0, 35.0 / 288.0, -315.0 / 2816.0], x)
                } else {
                    let t = x.sqrt();
                    (t / (1.0 + t * t).sqrt() - t.asinh()) / (2.0 * t * t * t)
                }
            }
            Unary::ArcoshRatio => {
                if x < 1.0 {
                    return -1.0 / 3.0;
                }
                let e = x - 1.0;
                if e < SERIES_CUTOFF {
                    poly(&[-1.0 / 3.0, 4.0 / 15.0, -6.0 / 35.0, 32.0 / 315.0], e)
                } else {
                    (1.0 - x * y) / (x * x - 1.0)
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Unary(Unary, Var),
    Sum(Var),
    RowSum(Var),
    MeanRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Transpose(Var),
    SoftmaxRows(Var),
    CrossEntropy { probs: Var, labels: Vec<usize>, mask: Vec<usize> },
    BceLogits { scores: Var, targets: Tensor },
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    ClampNormRows(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    trainable: bool,
    grad: Option<Tensor>,
}

/// Computation record: values, the operations that produced them, and
/// accumulated gradients for trainable leaves.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; no gradient is tracked for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// A trainable leaf whose gradient is accumulated by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: trainable, trainable, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a trainable leaf; zeros if nothing reached it.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        node.grad.clone().unwrap_or_else(|| {
            let (r, c) = node.value.shape();
            Tensor::zeros(r, c)
        })
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad, trainable: false, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::ConcatCols(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Unary(_, a)
            | Op::Sum(a)
            | Op::RowSum(a)
            | Op::MeanRows(a)
            | Op::SliceCols(a, _)
            | Op::Transpose(a)
            | Op::SoftmaxRows(a)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::ClampNormRows(a, _) => vec![*a],
            Op::CrossEntropy { probs, .. } => vec![*probs],
            Op::BceLogits { scores, .. } => vec![*scores],
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    /// Elementwise binary operation with 2-D broadcasting: each dimension of
    /// either operand may be 1.
    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (rows, cols) = broadcast_shape(av.shape(), bv.shape())?;
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let x = bget(av, i, j);
                let y = bget(bv, i, j);
                let v = match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                };
                out.set(i, j, v);
            }
        }
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "hadamard",
            Binary::Div => "div",
        };
        self.push(out, Op::Binary(kind, a, b), name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a), "add_scalar")
    }

    pub fn unary(&mut self, f: Unary, a: Var) -> Result<Var> {
        let av = self.value(a);
        for &x in av.data() {
            f.check_domain(x)?;
        }
        let value = av.map(|x| f.eval(x));
        self.push(value, Op::Unary(f, a), f.name())
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn artanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Artanh, a)
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(value, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).data().len();
        if n == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Per-row sum: N×d → N×1.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let data = av.row_iter().map(|r| r.iter().sum()).collect();
        let value = Tensor::new(av.rows(), 1, data)?;
        self.push(value, Op::RowSum(a), "row_sum")
    }

    /// Row-wise dot product of two same-shape tensors: N×d, N×d → N×1.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::invalid("row_dot needs equal shapes"));
        }
        let h = self.hadamard(a, b)?;
        self.row_sum(h)
    }

    /// Mean over rows: N×d → 1×d.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() == 0 {
            return Err(Error::invalid("row_mean of a tensor with no rows"));
        }
        let mut out = Tensor::zeros(1, av.cols());
        for r in av.row_iter() {
            for (o, x) in out.data_mut().iter_mut().zip(r) {
                *o += x;
            }
        }
        let n = av.rows() as f64;
        for o in out.data_mut() {
            *o /= n;
        }
        self.push(out, Op::MeanRows(a), "row_mean")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::invalid("concat_cols needs equal row counts"));
        }
        let mut data = Vec::with_capacity(av.data().len() + bv.data().len());
        for i in 0..av.rows() {
            data.extend_from_slice(av.row(i));
            data.extend_from_slice(bv.row(i));
        }
        let value = Tensor::new(av.rows(), av.cols() + bv.cols(), data)?;
        self.push(value, Op::ConcatCols(a, b), "concat_cols")
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start > end || end > av.cols() {
            return Err(Error::invalid(format!("column slice {start}..{end} out of range for {} columns", av.cols())));
        }
        let mut data = Vec::with_capacity(av.rows() * (end - start));
        for r in av.row_iter() {
            data.extend_from_slice(&r[start..end]);
        }
        let value = Tensor::new(av.rows(), end - start, data)?;
        self.push(value, Op::SliceCols(a, start), "slice_cols")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), "transpose")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        self.push(value, Op::SoftmaxRows(a), "softmax_rows")
    }

    /// Mean over the rows in `mask` of `-ln p[row, label[row]]`.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
        let p = self.value(probs);
        if labels.len() != p.rows() {
            return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), p.rows())));
        }
        if mask.is_empty() {
            return Err(Error::invalid("cross_entropy mask is empty"));
        }
        let mut total = 0.0;
        for &i in mask {
            if i >= p.rows() {
                return Err(Error::invalid(format!("mask row {i} out of range")));
            }
            let c = labels[i];
            if c >= p.cols() {
                return Err(Error::invalid(format!("label {c} out of range for {} classes", p.cols())));
            }
            total -= p.get(i, c).max(f64::MIN_POSITIVE).ln();
        }
        let value = Tensor::scalar(total / mask.len() as f64);
        self.push(
            value,
            Op::CrossEntropy { probs, labels: labels.to_vec(), mask: mask.to_vec() },
            "cross_entropy",
        )
    }

    /// Mean binary cross-entropy of `sigmoid(scores)` against 0/1 targets,
    /// evaluated in log-sum-exp form.
    pub fn bce_logits(&mut self, scores: Var, targets: &Tensor) -> Result<Var> {
        let s = self.value(scores);
        if s.shape() != targets.shape() {
            return Err(Error::invalid("bce_logits shape mismatch"));
        }
        if targets.data().iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::invalid("bce targets must be 0 or 1"));
        }
        if s.data().is_empty() {
            return Err(Error::invalid("bce_logits on an empty tensor"));
        }
        let total: f64 = s
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        let value = Tensor::scalar(total / s.data().len() as f64);
        self.push(value, Op::BceLogits { scores, targets: targets.clone() }, "bce_logits")
    }

    /// Rows `idx[0], idx[1], …` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(Error::invalid(format!("gather index {bad} out of range")));
        }
        let value = av.select_rows(idx);
        self.push(value, Op::GatherRows(a, idx.to_vec()), "gather_rows")
    }

    /// `out[idx[r]] += a[r]` into an `n`-row result.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n: usize) -> Result<Var> {
        let av = self.value(a);
        if idx.len() != av.rows() {
            return Err(Error::invalid("scatter index length must match row count"));
        }
        let mut out = Tensor::zeros(n, av.cols());
        for (r, &i) in idx.iter().enumerate() {
            if i >= n {
                return Err(Error::invalid(format!("scatter index {i} out of range")));
            }
            for (o, x) in out.row_mut(i).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        self.push(out, Op::ScatterAddRows(a, idx.to_vec()), "scatter_add_rows")
    }

    /// Rescales every row whose Euclidean norm exceeds `max_norm` onto the
    /// sphere of that radius.
    pub fn clamp_norm_rows(&mut self, a: Var, max_norm: f64) -> Result<Var> {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > max_norm {
                for x in row.iter_mut() {
                    *x *= max_norm / n;
                }
            }
        }
        self.push(value, Op::ClampNormRows(a, max_norm), "clamp_norm_rows")
    }

    /// Back-propagates from a scalar `loss`, adding `∂loss/∂leaf` into the
    /// gradient of every trainable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::invalid("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            if self.nodes[id].trainable {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (input, contrib) in self.local_grads(id, &g)? {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, id: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[id];
        let y = &node.value;
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let ga = g.matmul(&self.value(*b).transpose())?;
                let gb = self.value(*a).transpose().matmul(g)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Binary(kind, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (rows, cols) = g.shape();
                let mut ga = Tensor::zeros(rows, cols);
                let mut gb = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        let gij = g.get(i, j);
                        let x = bget(av, i, j);
                        let z = bget(bv, i, j);
                        let (da, db) = match kind {
                            Binary::Add => (gij, gij),
                            Binary::Sub => (gij, -gij),
                            Binary::Mul => (gij * z, gij * x),
                            Binary::Div => (gij / z, -gij * x / (z * z)),
                        };
                        ga.set(i, j, da);
                        gb.set(i, j, db);
                    }
                }
                vec![(*a, reduce_to(ga, av.shape())), (*b, reduce_to(gb, bv.shape()))]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|v| v * c))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Unary(f, a) => {
                let x = self.value(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| gv * f.deriv(xv, yv))
                    .collect();
                vec![(*a, Tensor::new(x.rows(), x.cols(), data)?)]
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                vec![(*a, Tensor::filled(r, c, g.item()?))]
            }
            Op::RowSum(a) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i).fill(g.get(i, 0));
                }
                vec![(*a, ga)]
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        ga.set(i, j, g.get(0, j) / r as f64);
                    }
                }
                vec![(*a, ga)]
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                let mut ga = Vec::with_capacity(g.rows() * ca);
                let mut gb = Vec::with_capacity(g.rows() * cb);
                for r in g.row_iter() {
                    ga.extend_from_slice(&r[..ca]);
                    gb.extend_from_slice(&r[ca..]);
                }
                vec![(*a, Tensor::new(g.rows(), ca, ga)?), (*b, Tensor::new(g.rows(), cb, gb)?)]
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                vec![(*a, ga)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (j, o) in ga.row_mut(i).iter_mut().enumerate() {
                        *o = yr[j] * (gr[j] - dot);
                    }
                }
                vec![(*a, ga)]
            }
            Op::CrossEntropy { probs, labels, mask } => {
                let p = self.value(*probs);
                let scale = g.item()? / mask.len() as f64;
                let mut ga = Tensor::zeros(p.rows(), p.cols());
                for &i in mask {
                    let c = labels[i];
                    let pv = p.get(i, c).max(f64::MIN_POSITIVE);
                    ga.set(i, c, ga.get(i, c) - scale / pv);
                }
                vec![(*probs, ga)]
            }
            Op::BceLogits { scores, targets } => {
                let s = self.value(*scores);
                let scale = g.item()? / s.data().len() as f64;
                let data = s
                    .data()
                    .iter()
                    .zip(targets.data())
                    .map(|(&x, &t)| scale * (sigmoid(x) - t))
                    .collect();
                vec![(*scores, Tensor::new(s.rows(), s.cols(), data)?)]
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                vec![(*a, ga)]
            }
            Op::ScatterAddRows(a, idx) => vec![(*a, g.select_rows(idx))],
            Op::ClampNormRows(a, max_norm) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for i in 0..x.rows() {
                    let xr = x.row(i);
                    let n = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n > *max_norm {
                        let gr = g.row(i);
                        let xg: f64 = xr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        let f = max_norm / n;
                        for (j, o) in ga.row_mut(i).iter_mut().enumerate() {
                            *o = f * (gr[j] - xr[j] * xg / (n * n));
                        }
                    }
                }
                vec![(*a, ga)]
            }
        };
        Ok(out)
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::invalid(format!(
            "shapes {}x{} and {}x{} do not broadcast",
            a.0, a.1, b.0, b.1
        ))),
    }
}

#[inline]
fn bget(t: &Tensor, i: usize, j: usize) -> f64 {
    let r = if t.rows() == 1 { 0 } else { i };
    let c = if t.cols() == 1 { 0 } else { j };
    t.get(r, c)
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let r = if shape.0 == 1 { 0 } else { i };
            let c = if shape.1 == 1 { 0 } else { j };
            out.set(r, c, out.get(r, c) + g.get(i, j));
        }
    }
    out
}
