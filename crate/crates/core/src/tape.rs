//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Every operation evaluates eagerly and records a [`Node`] holding its value
//! and its inputs. [`Tape::backward`] walks the nodes in reverse order of
//! creation, which is a valid reverse topological order because inputs always
//! precede their consumers.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeometry, Padding};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Neg,
    Abs,
    Sqrt,
    Exp,
    Log,
    Relu,
    Elu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Softplus,
    Powf(f64),
    Scale(f64),
    AddScalar(f64),
    ClampMin(f64),
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Abs => x.abs(),
            Unary::Sqrt => x.sqrt(),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Relu => x.max(0.0),
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Softplus => softplus(x),
            Unary::Powf(p) => x.powf(p),
            Unary::Scale(s) => s * x,
            Unary::AddScalar(s) => x + s,
            Unary::ClampMin(m) => x.max(m),
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Sqrt => 0.5 / y,
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Relu => f64::from(u8::from(x > 0.0)),
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Softplus => sigmoid(x),
            Unary::Powf(p) => p * x.powf(p - 1.0),
            Unary::Scale(s) => s,
            Unary::AddScalar(_) => 1.0,
            Unary::ClampMin(m) => f64::from(u8::from(x > m)),
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

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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
    Constant,
    Param { store: u64, id: ParamId },
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    Sum(Var),
    Mean(Var),
    /// Sum over the trailing axis.
    SumLast(Var),
    /// Sum over the leading axis.
    SumFirst(Var),
    /// `x[.., c] * v[c]`.
    MulChannel(Var, Var),
    /// `x[n, ..] * v[n]`.
    ScaleRows(Var, Var),
    Matmul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    GlobalAvgPool(Var),
    Upsample(Var, usize),
    ConcatChannels(Vec<Var>),
    BatchItem(Var, usize),
    StackBatch(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            checked: cfg!(debug_assertions),
        }
    }

    /// Enables or disables domain checks on `div` and `log`; when disabled,
    /// infinities and NaNs propagate.
    pub fn with_domain_checks(mut self, on: bool) -> Self {
        self.checked = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    /// Records the current value of a parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.push(
            Op::Param {
                store: store.uid(),
                id,
            },
            value,
        )
    }

    /// A copy of `v`'s value with no gradient path back to `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn unary(&mut self, op: Unary, x: Var) -> Var {
        let value = self.value(x).map(|v| op.apply(v));
        self.push(Op::Unary(op, x), value)
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.same_shape("elementwise", bv)?;
        if self.checked && op == Binary::Div && bv.data().iter().any(|&d| d == 0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        let value = av.zip_map(bv, |x, y| match op {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        })?;
        Ok(self.push(Op::Binary(op, a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(Unary::Neg, x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Unary::Abs, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(Unary::Sqrt, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.checked && self.value(x).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: "non-positive argument".into(),
            });
        }
        Ok(self.unary(Unary::Log, x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Unary::Relu, x)
    }

    /// ELU with `alpha = 1`.
    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(Unary::Elu, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(Unary::Softplus, x)
    }

    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary(Unary::Powf(p), x)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(Unary::Scale(s), x)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(Unary::AddScalar(s), x)
    }

    /// `max(x, floor)`; the gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        self.unary(Unary::ClampMin(floor), x)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let s = self.value(x).mean();
        self.push(Op::Mean(x), Tensor::scalar(s))
    }

    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.ndim() < 2 {
            return Err(Error::invalid_shape(v.shape(), "sum_last needs rank >= 2"));
        }
        let k = *v.shape().last().unwrap();
        let data: Vec<f64> = v
            .data()
            .chunks_exact(k)
            .map(|row| row.iter().fold(0.0, |a, &b| a + b))
            .collect();
        let value = Tensor::new(&v.shape()[..v.ndim() - 1], data)?;
        Ok(self.push(Op::SumLast(x), value))
    }

    pub fn sum_first(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.ndim() < 2 {
            return Err(Error::invalid_shape(v.shape(), "sum_first needs rank >= 2"));
        }
        let rest = v.len() / v.shape()[0];
        let mut data = vec![0.0; rest];
        for row in v.data().chunks_exact(rest) {
            for (o, &r) in data.iter_mut().zip(row) {
                *o += r;
            }
        }
        let value = Tensor::new(&v.shape()[1..], data)?;
        Ok(self.push(Op::SumFirst(x), value))
    }

    /// Broadcasts `v[c]` over the trailing channel axis of `x`.
    pub fn mul_channel(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (self.value(x), self.value(v));
        let c = *xv.shape().last().unwrap();
        if vv.shape() != [c] {
            return Err(Error::shape("mul_channel", xv.shape(), vv.shape()));
        }
        let mut out = xv.clone();
        for px in out.data_mut().chunks_exact_mut(c) {
            for (o, &s) in px.iter_mut().zip(vv.data()) {
                *o *= s;
            }
        }
        Ok(self.push(Op::MulChannel(x, v), out))
    }

    /// Scales slice `i` along the leading axis of `x` by `v[i]`.
    pub fn scale_rows(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (self.value(x), self.value(v));
        let n = xv.shape()[0];
        if vv.shape() != [n] {
            return Err(Error::shape("scale_rows", xv.shape(), vv.shape()));
        }
        let rest = xv.len() / n;
        let mut out = xv.clone();
        for (row, &s) in out.data_mut().chunks_exact_mut(rest).zip(vv.data()) {
            for o in row {
                *o *= s;
            }
        }
        Ok(self.push(Op::ScaleRows(x, v), out))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), value))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose2()?;
        Ok(self.push(Op::Transpose(x), value))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape(x), value))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let geom = ConvGeometry::new(
            self.shape(input),
            self.shape(kernel),
            stride,
            dilation,
            padding,
        )?;
        if let Some(b) = bias {
            if self.shape(b) != [geom.c_out] {
                return Err(Error::shape("conv2d bias", self.shape(b), &[geom.c_out]));
            }
        }
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(&geom.output_shape(), out)?;
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            value,
        ))
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let value = kernels::global_avg_pool(self.value(x))?;
        Ok(self.push(Op::GlobalAvgPool(x), value))
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let value = kernels::upsample_nearest(self.value(x), factor)?;
        Ok(self.push(Op::Upsample(x, factor), value))
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let (b, h, w, _) = self.value(first).dims4()?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (xb, xh, xw, xc) = self.value(x).dims4()?;
            if (xb, xh, xw) != (b, h, w) {
                return Err(Error::shape("concat_channels", self.shape(first), self.shape(x)));
            }
            widths.push(xc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(b * h * w * total);
        for px in 0..b * h * w {
            for (&x, &c) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[px * c..(px + 1) * c]);
            }
        }
        let value = Tensor::new(&[b, h, w, total], out)?;
        Ok(self.push(Op::ConcatChannels(xs.to_vec()), value))
    }

    pub fn batch_item(&mut self, x: Var, i: usize) -> Result<Var> {
        let value = self.value(x).batch_item(i)?;
        Ok(self.push(Op::BatchItem(x, i), value))
    }

    pub fn stack_batch(&mut self, xs: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = xs.iter().map(|&x| self.value(x).clone()).collect();
        let value = Tensor::stack_batch(&values)?;
        Ok(self.push(Op::StackBatch(xs.to_vec()), value))
    }

    /// Backpropagates from a scalar `loss` through the whole tape.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid_shape(
                self.shape(loss),
                "backward requires a scalar loss",
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let links = self
            .nodes
            .iter()
            .enumerate()
            .take(loss.0 + 1)
            .filter_map(|(i, n)| match n.op {
                Op::Param { store, id } => Some((store, id, Var(i))),
                _ => None,
            })
            .collect();
        Ok(Grads { grads, links })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Constant | Op::Param { .. } => {}
            Op::Unary(op, x) => {
                let xv = self.value(*x);
                let d: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| gi * op.derivative(xi, yi))
                    .collect();
                accumulate(grads, *x, Tensor::new(xv.shape(), d)?)?;
            }
            Op::Binary(op, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ga, gb) = match op {
                    Binary::Add => (g.clone(), g.clone()),
                    Binary::Sub => (g.clone(), g.scale(-1.0)),
                    Binary::Mul => (g.zip_map(bv, |g, b| g * b)?, g.zip_map(av, |g, a| g * a)?),
                    Binary::Div => {
                        let ga = g.zip_map(bv, |g, b| g / b)?;
                        let gb = Tensor::new(
                            g.shape(),
                            g.data()
                                .iter()
                                .zip(av.data())
                                .zip(bv.data())
                                .map(|((&g, &a), &b)| -g * a / (b * b))
                                .collect(),
                        )?;
                        (ga, gb)
                    }
                };
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                accumulate(grads, *x, Tensor::full(self.shape(*x), gv))?;
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                let gv = g.data()[0] / n;
                accumulate(grads, *x, Tensor::full(self.shape(*x), gv))?;
            }
            Op::SumLast(x) => {
                let shape = self.shape(*x);
                let k = *shape.last().unwrap();
                let d = g
                    .data()
                    .iter()
                    .flat_map(|&gi| std::iter::repeat(gi).take(k))
                    .collect();
                accumulate(grads, *x, Tensor::new(shape, d)?)?;
            }
            Op::SumFirst(x) => {
                let shape = self.shape(*x);
                let d = std::iter::repeat(g.data())
                    .take(shape[0])
                    .flatten()
                    .copied()
                    .collect();
                accumulate(grads, *x, Tensor::new(shape, d)?)?;
            }
            Op::MulChannel(x, v) => {
                let (xv, vv) = (self.value(*x), self.value(*v));
                let c = vv.len();
                let mut gx = g.clone();
                let mut gvv = vec![0.0; c];
                for (gpx, xpx) in gx.data_mut().chunks_exact_mut(c).zip(xv.data().chunks_exact(c)) {
                    for ch in 0..c {
                        gvv[ch] += gpx[ch] * xpx[ch];
                        gpx[ch] *= vv.data()[ch];
                    }
                }
                accumulate(grads, *x, gx)?;
                accumulate(grads, *v, Tensor::new(&[c], gvv)?)?;
            }
            Op::ScaleRows(x, v) => {
                let (xv, vv) = (self.value(*x), self.value(*v));
                let n = vv.len();
                let rest = xv.len() / n;
                let mut gx = g.clone();
                let mut gvv = vec![0.0; n];
                for (i, (grow, xrow)) in gx
                    .data_mut()
                    .chunks_exact_mut(rest)
                    .zip(xv.data().chunks_exact(rest))
                    .enumerate()
                {
                    let s = vv.data()[i];
                    for (gi, &xi) in grow.iter_mut().zip(xrow) {
                        gvv[i] += *gi * xi;
                        *gi *= s;
                    }
                }
                accumulate(grads, *x, gx)?;
                accumulate(grads, *v, Tensor::new(&[n], gvv)?)?;
            }
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = kernels::matmul(g, &bv.transpose2()?)?;
                let gb = kernels::matmul(&av.transpose2()?, g)?;
                accumulate(grads, *a, ga)?;
                accumulate(grads, *b, gb)?;
            }
            Op::Transpose(x) => accumulate(grads, *x, g.transpose2()?)?,
            Op::Reshape(x) => accumulate(grads, *x, g.reshape(self.shape(*x))?)?,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let gin = kernels::conv2d_backward_input(g.data(), self.value(*kernel).data(), geom);
                let gk = kernels::conv2d_backward_kernel(g.data(), self.value(*input).data(), geom);
                accumulate(grads, *input, Tensor::new(self.shape(*input), gin)?)?;
                accumulate(grads, *kernel, Tensor::new(self.shape(*kernel), gk)?)?;
                if let Some(b) = bias {
                    let gb = kernels::conv2d_backward_bias(g.data(), geom.c_out);
                    accumulate(grads, *b, Tensor::new(&[geom.c_out], gb)?)?;
                }
            }
            Op::GlobalAvgPool(x) => {
                let (b, h, w, c) = self.value(*x).dims4()?;
                let n = (h * w) as f64;
                let mut d = Vec::with_capacity(b * h * w * c);
                for bi in 0..b {
                    let gb = &g.data()[bi * c..(bi + 1) * c];
                    for _ in 0..h * w {
                        d.extend(gb.iter().map(|&v| v / n));
                    }
                }
                accumulate(grads, *x, Tensor::new(&[b, h, w, c], d)?)?;
            }
            Op::Upsample(x, factor) => {
                accumulate(grads, *x, kernels::upsample_nearest_backward(g, *factor)?)?;
            }
            Op::ConcatChannels(xs) => {
                let (b, h, w, total) = g.dims4()?;
                let widths: Vec<usize> = xs.iter().map(|&x| self.shape(x)[3]).collect();
                let mut parts: Vec<Vec<f64>> =
                    widths.iter().map(|&c| Vec::with_capacity(b * h * w * c)).collect();
                for px in g.data().chunks_exact(total) {
                    let mut off = 0;
                    for (part, &c) in parts.iter_mut().zip(&widths) {
                        part.extend_from_slice(&px[off..off + c]);
                        off += c;
                    }
                }
                for ((&x, part), &c) in xs.iter().zip(parts).zip(&widths) {
                    accumulate(grads, x, Tensor::new(&[b, h, w, c], part)?)?;
                }
            }
            Op::BatchItem(x, i) => {
                let (b, h, w, c) = self.value(*x).dims4()?;
                let n = h * w * c;
                let mut d = vec![0.0; b * n];
                d[i * n..(i + 1) * n].copy_from_slice(g.data());
                accumulate(grads, *x, Tensor::new(&[b, h, w, c], d)?)?;
            }
            Op::StackBatch(xs) => {
                let mut off = 0;
                for &x in xs {
                    let n = self.value(x).len();
                    let part = Tensor::new(self.shape(x), g.data()[off..off + n].to_vec())?;
                    accumulate(grads, x, part)?;
                    off += n;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    links: Vec<(u64, ParamId, Var)>,
}

impl Grads {
    /// Gradient of the loss with respect to any recorded value, if reachable.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for the parameters of `store` bound on the tape, summed over
    /// repeated bindings, in binding order.
    pub fn params_of(&self, store: &ParamStore) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = Vec::new();
        for &(uid, id, var) in &self.links {
            if uid != store.uid() {
                continue;
            }
            let Some(g) = self.wrt(var) else {
                continue;
            };
            match out.iter_mut().find(|(p, _)| *p == id) {
                Some((_, acc)) => acc
                    .add_assign(g)
                    .expect("parameter bindings share a shape"),
                None => out.push((id, g.clone())),
            }
        }
        out
    }
}
