//! Reverse-mode automatic differentiation over batched matrices.
//!
//! A [`Tape`] records every operation eagerly. Leaves are either trainable
//! parameters or constants; constants (stored states, labels, detached
//! targets) never receive a gradient, and nodes whose ancestry holds no
//! parameter are skipped during the backward sweep.
//!
//! Binary elementwise ops broadcast their right operand when it is `1 x c`,
//! `r x 1` or `1 x 1`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::math;
use crate::tensor::{gemm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Square(Var),
    Min(Var, Var),
    Max(Var, Var),
    Clip(Var, f64, f64),
    Reshape(Var),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    RowSum(Var),
    Sum(Var),
    Mean(Var),
    Sign,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Softplus(..) => "softplus",
            Op::Square(..) => "square",
            Op::Min(..) => "min",
            Op::Max(..) => "max",
            Op::Clip(..) => "clip",
            Op::Reshape(..) => "reshape",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::RowSum(..) => "row_sum",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Sign => "sign",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Grads {
    g: Vec<Option<Matrix>>,
}

impl Grads {
    /// `None` for constants, intermediate nodes, and parameters the loss
    /// does not depend on.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.g.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when none flowed.
    pub fn wrt_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.wrt(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn bcast_kind(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<Bcast> {
    if a == b {
        Ok(Bcast::Same)
    } else if b == (1, 1) {
        Ok(Bcast::Scalar)
    } else if b.0 == 1 && b.1 == a.1 {
        Ok(Bcast::Row)
    } else if b.1 == 1 && b.0 == a.0 {
        Ok(Bcast::Col)
    } else {
        Err(shape_err(op, a, b))
    }
}

#[inline]
fn bidx(kind: Bcast, cols: usize, i: usize) -> usize {
    match kind {
        Bcast::Same => i,
        Bcast::Row => i % cols,
        Bcast::Col => i / cols,
        Bcast::Scalar => 0,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(Matrix::scalar(v))
    }

    /// Copies the value of `v` into a new constant leaf.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Matrix, bool)> {
        let (va, vb) = (self.value(a), self.value(b));
        let kind = bcast_kind(name, va.shape(), vb.shape())?;
        let cols = va.cols();
        let bd = vb.data();
        let mut out = va.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x = f(*x, bd[bidx(kind, cols, i)]);
        }
        Ok((out, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// Elementwise minimum; the subgradient goes to the selected branch
    /// (the left one on ties).
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err("min", self.value(a).shape(), self.value(b).shape()));
        }
        let (v, rg) = self.binary(a, b, "min", |x, y| if x <= y { x } else { y })?;
        Ok(self.push(v, Op::Min(a, b), rg))
    }

    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err("max", self.value(a).shape(), self.value(b).shape()));
        }
        let (v, rg) = self.binary(a, b, "max", |x, y| if x >= y { x } else { y })?;
        Ok(self.push(v, Op::Max(a, b), rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::Scale(a, k), |x| k * x)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), math::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), math::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), math::ln)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), math::softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Clamp to `[lo, hi]`; no gradient flows where the input lies outside.
    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clip(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Elementwise sign. Not differentiable: a backward sweep reaching it
    /// fails.
    pub fn sign(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sign, |x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshaped(rows, cols)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let va = self.value(a);
        if start + width > va.cols() {
            return Err(shape_err("slice_cols", (va.rows(), start + width), va.shape()));
        }
        let value = Matrix::from_fn(va.rows(), width, |i, j| va.get(i, start + j));
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(shape_err("concat_cols", va.shape(), vb.shape()));
        }
        let (ca, cb) = (va.cols(), vb.cols());
        let value = Matrix::from_fn(va.rows(), ca + cb, |i, j| {
            if j < ca {
                va.get(i, j)
            } else {
                vb.get(i, j - ca)
            }
        });
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    /// `r x c -> r x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Matrix::from_fn(va.rows(), 1, |i, _| va.row(i).iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::RowSum(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Matrix::scalar(va.sum() / va.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    /// Intermediate gradients are released as the sweep passes them.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(shape_err("backward", (1, 1), lv.shape()));
        }
        let mut g: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        if !self.rg(loss) {
            return Ok(Grads { g });
        }
        g[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(dy) = g[idx].take() else { continue };
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.rg(a) {
                        let va = self.value(a);
                        let ga = g[a.0].get_or_insert_with(|| Matrix::zeros(va.rows(), va.cols()));
                        gemm(1.0, &dy, false, self.value(b), true, 1.0, ga)?;
                    }
                    if self.rg(b) {
                        let vb = self.value(b);
                        let gb = g[b.0].get_or_insert_with(|| Matrix::zeros(vb.rows(), vb.cols()));
                        gemm(1.0, self.value(a), true, &dy, false, 1.0, gb)?;
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let kind = bcast_kind("backward", va.shape(), vb.shape())?;
                    let cols = va.cols();
                    let is_mul = matches!(node.op, Op::Mul(..));
                    let sign_b = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if self.rg(a) {
                        let mut da = dy.clone();
                        if is_mul {
                            let bd = vb.data();
                            for (i, x) in da.data_mut().iter_mut().enumerate() {
                                *x *= bd[bidx(kind, cols, i)];
                            }
                        }
                        accumulate(&mut g, a, da);
                    }
                    if self.rg(b) {
                        let mut db = Matrix::zeros(vb.rows(), vb.cols());
                        let ad = va.data();
                        let dbd = db.data_mut();
                        for (i, &d) in dy.data().iter().enumerate() {
                            let contrib = if is_mul { d * ad[i] } else { sign_b * d };
                            dbd[bidx(kind, cols, i)] += contrib;
                        }
                        accumulate(&mut g, b, db);
                    }
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let pick_min = matches!(node.op, Op::Min(..));
                    let mut da = Matrix::zeros(va.rows(), va.cols());
                    let mut db = Matrix::zeros(vb.rows(), vb.cols());
                    for (i, &d) in dy.data().iter().enumerate() {
                        let (x, y) = (va.data()[i], vb.data()[i]);
                        let left = if pick_min { x <= y } else { x >= y };
                        if left {
                            da.data_mut()[i] = d;
                        } else {
                            db.data_mut()[i] = d;
                        }
                    }
                    if self.rg(a) {
                        accumulate(&mut g, a, da);
                    }
                    if self.rg(b) {
                        accumulate(&mut g, b, db);
                    }
                }
                Op::Scale(a, k) => {
                    let mut da = dy;
                    for x in da.data_mut() {
                        *x *= k;
                    }
                    accumulate(&mut g, a, da);
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    let shape = self.value(a).shape();
                    let da = dy.reshaped(shape.0, shape.1)?;
                    accumulate(&mut g, a, da);
                }
                Op::Relu(a) => {
                    let da = zip_map(&dy, self.value(a), |d, x| if x > 0.0 { d } else { 0.0 });
                    accumulate(&mut g, a, da);
                }
                Op::Tanh(a) => {
                    let da = zip_map(&dy, &node.value, |d, y| d * (1.0 - y * y));
                    accumulate(&mut g, a, da);
                }
                Op::Exp(a) => {
                    let da = zip_map(&dy, &node.value, |d, y| d * y);
                    accumulate(&mut g, a, da);
                }
                Op::Log(a) => {
                    let da = zip_map(&dy, self.value(a), |d, x| d / x);
                    accumulate(&mut g, a, da);
                }
                Op::Softplus(a) => {
                    let da = zip_map(&dy, self.value(a), |d, x| d * math::sigmoid(x));
                    accumulate(&mut g, a, da);
                }
                Op::Square(a) => {
                    let da = zip_map(&dy, self.value(a), |d, x| 2.0 * d * x);
                    accumulate(&mut g, a, da);
                }
                Op::Clip(a, lo, hi) => {
                    let da = zip_map(&dy, self.value(a), |d, x| {
                        if (lo..=hi).contains(&x) {
                            d
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut g, a, da);
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(a);
                    let mut da = Matrix::zeros(va.rows(), va.cols());
                    for i in 0..dy.rows() {
                        da.row_mut(i)[start..start + dy.cols()].copy_from_slice(dy.row(i));
                    }
                    accumulate(&mut g, a, da);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(a).cols();
                    let cb = self.value(b).cols();
                    if self.rg(a) {
                        let da = Matrix::from_fn(dy.rows(), ca, |i, j| dy.get(i, j));
                        accumulate(&mut g, a, da);
                    }
                    if self.rg(b) {
                        let db = Matrix::from_fn(dy.rows(), cb, |i, j| dy.get(i, ca + j));
                        accumulate(&mut g, b, db);
                    }
                }
                Op::RowSum(a) => {
                    let va = self.value(a);
                    let da = Matrix::from_fn(va.rows(), va.cols(), |i, _| dy.get(i, 0));
                    accumulate(&mut g, a, da);
                }
                Op::Sum(a) | Op::Mean(a) => {
                    let va = self.value(a);
                    let mut d = dy.data()[0];
                    if matches!(node.op, Op::Mean(..)) {
                        d /= va.len() as f64;
                    }
                    accumulate(&mut g, a, Matrix::filled(va.rows(), va.cols(), d));
                }
                Op::Sign => return Err(Error::NonDifferentiable(node.op.name())),
            }
        }
        Ok(Grads { g })
    }
}

fn zip_map(d: &Matrix, x: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let mut out = d.clone();
    for (o, &xv) in out.data_mut().iter_mut().zip(x.data()) {
        *o = f(*o, xv);
    }
    out
}

fn accumulate(g: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut g[v.0] {
        Some(acc) => acc.axpy(1.0, &d),
        slot @ None => *slot = Some(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Matrix) {
        let mut tape = Tape::new();
        let x = tape.param(x0.clone());
        let l = build(&mut tape, x);
        let grads = tape.backward(l).unwrap();
        let g = grads.wrt(x).unwrap().clone();
        let h = 1e-6;
        for i in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                xp.data_mut()[i] += delta;
                let mut t = Tape::new();
                let v = t.param(xp);
                let l = build(&mut t, v);
                t.scalar(l)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = g.data()[i];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "i={i} fd={fd} an={an}");
        }
    }

    #[test]
    fn quadratic_form_gradient() {
        let w0 = Matrix::from_fn(2, 3, |i, j| 0.3 * i as f64 - 0.2 * j as f64 + 0.1);
        let xv = Matrix::from_fn(3, 1, |i, _| 1.0 + i as f64);
        let mut t = Tape::new();
        let w = t.param(w0.clone());
        let x = t.constant(xv.clone());
        let wx = t.matmul(w, x).unwrap();
        let sq = t.square(wx);
        let s = t.sum(sq);
        let l = t.scale(s, 0.5);
        let g = t.backward(l).unwrap();
        let wxv = w0.matmul(&xv).unwrap();
        let want = wxv.matmul(&xv.transpose()).unwrap();
        let got = g.wrt(w).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(g.wrt(x).is_none());
    }

    #[test]
    fn clip_blocks_gradient_outside() {
        let mut t = Tape::new();
        let r = t.param(Matrix::scalar(1.2));
        let c = t.clip(r, 0.9, 1.1);
        let g = t.backward(c).unwrap();
        assert_eq!(g.wrt(r).unwrap().data()[0], 0.0);
        assert_eq!(t.scalar(c), 1.1);
    }

    #[test]
    fn sign_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.3));
        let s = t.sign(x);
        assert!(matches!(t.backward(s), Err(Error::NonDifferentiable("sign"))));
    }

    #[test]
    fn sign_on_constant_branch_is_fine() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.3));
        let c = t.constant_scalar(-2.0);
        let s = t.sign(c);
        let y = t.mul(x, s).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().data()[0], -1.0);
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let x0 = Matrix::from_fn(3, 4, |i, j| 0.37 * i as f64 - 0.21 * j as f64 + 0.05);
        fd_check(
            |t, x| {
                let a = t.tanh(x);
                let b = t.softplus(x);
                let c = t.mul(a, b).unwrap();
                let e = t.exp(c);
                let sp = t.add_scalar(e, 1.0);
                let l = t.log(sp);
                let r = t.relu(x);
                let m = t.max(l, r).unwrap();
                let n = t.min(m, a).unwrap();
                let rs = t.row_sum(n);
                let sq = t.square(rs);
                t.mean(sq)
            },
            x0,
        );
    }

    #[test]
    fn broadcasting_and_layout_ops_match_finite_differences() {
        let x0 = Matrix::from_fn(4, 3, |i, j| 0.1 * (i * 3 + j) as f64 - 0.4);
        fd_check(
            |t, x| {
                let row = t.slice_cols(x, 1, 2).unwrap();
                let first = t.slice_cols(x, 0, 1).unwrap();
                let scalar_src = t.slice_cols(x, 2, 1).unwrap();
                let s = t.sum(scalar_src);
                let a = t.mul(row, first).unwrap();
                let b = t.sub(a, s).unwrap();
                let cat = t.concat_cols(b, first).unwrap();
                let rs = t.reshape(cat, 3, 4).unwrap();
                let top = t.slice_cols(rs, 0, 4).unwrap();
                let w = t.constant(Matrix::from_fn(1, 4, |_, j| j as f64 - 1.5));
                let m = t.mul(top, w).unwrap();
                let sq = t.square(m);
                t.sum(sq)
            },
            x0,
        );
    }

    #[test]
    fn matmul_gradients_both_sides() {
        let a0 = Matrix::from_fn(3, 2, |i, j| 0.2 * i as f64 + 0.7 * j as f64 - 0.3);
        let b0 = Matrix::from_fn(2, 4, |i, j| 0.1 * (i + j) as f64 - 0.2);
        fd_check(
            |t, a| {
                let b = t.param(b0.clone());
                let c = t.matmul(a, b).unwrap();
                let d = t.tanh(c);
                t.sum(d)
            },
            a0.clone(),
        );
        fd_check(
            |t, b| {
                let a = t.constant(a0.clone());
                let c = t.matmul(a, b).unwrap();
                let d = t.square(c);
                t.sum(d)
            },
            b0.clone(),
        );
    }

    #[test]
    fn reused_node_accumulates() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let g = t.backward(z).unwrap();
        assert_eq!(g.wrt(x).unwrap().data()[0], 7.0);
    }
}
