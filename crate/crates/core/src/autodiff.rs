//! Reverse-mode differentiation over a flat tape of dense matrix operations.
//!
//! Values are scalars, vectors or square matrices. Each primitive records its
//! inputs and whatever it needs for the backward pass (for spectral functions,
//! the eigendecomposition of the input). [`Tape::backward`] walks the tape in
//! reverse, accumulating adjoints.
//!
//! Spectral functions `Y = K f(Λ) Kᵀ` use the Daleckii-Krein form
//! `Ā += K (G ∘ (Kᵀ Ȳ K)) Kᵀ`, where `G` is the [`loewner`] matrix of
//! divided differences of `f`.

use crate::error::{Error, Result};
use crate::isometry::Sign;
use crate::linalg::{eig_sym, tri_dim, EigenDecomp, MatFn, Matrix, SymMat};

/// A node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Matrix),
}

impl Value {
    pub fn scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(x) => Ok(*x),
            _ => Err(Error::Tape("expected a scalar".into())),
        }
    }

    pub fn vector(&self) -> Result<&[f64]> {
        match self {
            Value::Vector(v) => Ok(v),
            _ => Err(Error::Tape("expected a vector".into())),
        }
    }

    pub fn matrix(&self) -> Result<&Matrix> {
        match self {
            Value::Matrix(m) => Ok(m),
            _ => Err(Error::Tape("expected a matrix".into())),
        }
    }

    fn zeros_like(&self) -> Value {
        match self {
            Value::Scalar(_) => Value::Scalar(0.0),
            Value::Vector(v) => Value::Vector(vec![0.0; v.len()]),
            Value::Matrix(m) => Value::Matrix(Matrix::zeros(m.n())),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Scalar(x) => x.is_finite(),
            Value::Vector(v) => v.iter().all(|x| x.is_finite()),
            Value::Matrix(m) => m.is_finite(),
        }
    }

    /// Flattened entries (row-major for matrices).
    pub fn as_flat(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v,
            Value::Matrix(m) => m.as_slice(),
        }
    }

    fn as_flat_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(x) => std::slice::from_mut(x),
            Value::Vector(v) => v,
            Value::Matrix(m) => m.as_mut_slice(),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    MatInv(Var),
    Hadamard(Var, Var),
    Trace(Var),
    FrobeniusSq(Var),
    Symmetrize(Var),
    MatFun { x: Var, f: MatFn, eig: EigenDecomp },
    LogEigvals { x: Var, eig: EigenDecomp },
    SymFromTri(Var),
    Plane { theta: Var, k: usize, sign: Sign, i: usize, j: usize },
    Slice(Var, usize, usize),
    Element(Var, usize),
    SumSq(Var),
    AbsSum(Var),
    MaxAbs(Var, usize),
    Square(Var),
    Mul(Var, Var),
    Softplus(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Value,
    op: Op,
}

/// Recording of one scalar computation. Single-owner; build one per sample
/// when fanning out.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Value>>>,
    corrupt_adjoint: bool,
}

/// `G_ij = (f(λ_i) − f(λ_j)) / (λ_i − λ_j)`, or `f'((λ_i + λ_j)/2)` when
/// `|λ_i − λ_j| <= 1e-7 (1 + |λ_i| + |λ_j|)`.
pub fn loewner(values: &[f64], f: MatFn) -> Matrix {
    let n = values.len();
    let fv: Vec<f64> = values.iter().map(|&l| f.eval(l)).collect();
    let mut g = Matrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (values[i], values[j]);
            let delta = 1e-7 * (1.0 + a.abs() + b.abs());
            let v = if (a - b).abs() > delta {
                (fv[i] - fv[j]) / (a - b)
            } else {
                f.deriv(0.5 * (a + b))
            };
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}

fn sym_part(m: &Matrix) -> Matrix {
    m.symmetric_part()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Debug negative control: scales the left adjoint of every matrix
    /// product by 1.1, so gradient checks must fail.
    pub fn with_corrupted_adjoint() -> Self {
        Tape {
            corrupt_adjoint: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Value, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite("tape value"));
        }
        self.grads = None;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mat(&self, v: Var) -> Result<&Matrix> {
        self.nodes[v.0].value.matrix()
    }

    fn vec(&self, v: Var) -> Result<&[f64]> {
        self.nodes[v.0].value.vector()
    }

    fn sc(&self, v: Var) -> Result<f64> {
        self.nodes[v.0].value.scalar()
    }

    pub fn leaf(&mut self, value: Value) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Result<Var> {
        self.leaf(Value::Scalar(x))
    }

    pub fn vector(&mut self, v: Vec<f64>) -> Result<Var> {
        self.leaf(Value::Vector(v))
    }

    pub fn matrix(&mut self, m: Matrix) -> Result<Var> {
        self.leaf(Value::Matrix(m))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let ok = match (self.value(a), self.value(b)) {
            (Value::Scalar(_), Value::Scalar(_)) => true,
            (Value::Vector(x), Value::Vector(y)) => x.len() == y.len(),
            (Value::Matrix(x), Value::Matrix(y)) => x.n() == y.n(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("operands of different shape".into()))
        }
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Value> {
        self.same_shape(a, b)?;
        let mut out = self.value(a).clone();
        for (o, y) in out.as_flat_mut().iter_mut().zip(self.value(b).as_flat()) {
            *o = f(*o, *y);
        }
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, |x, y| x + y)?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, |x, y| x - y)?;
        self.push(v, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let mut v = self.value(a).clone();
        v.as_flat_mut().iter_mut().for_each(|x| *x *= c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let m = self.mat(a)?.matmul(self.mat(b)?)?;
        self.push(Value::Matrix(m), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let m = self.mat(a)?.transpose();
        self.push(Value::Matrix(m), Op::Transpose(a))
    }

    pub fn matinv(&mut self, a: Var) -> Result<Var> {
        let m = self.mat(a)?.inverse()?;
        self.push(Value::Matrix(m), Op::MatInv(a))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, |x, y| x * y)?;
        self.push(v, Op::Hadamard(a, b))
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let t = self.mat(a)?.trace();
        self.push(Value::Scalar(t), Op::Trace(a))
    }

    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let t = self.mat(a)?.frobenius_sq();
        self.push(Value::Scalar(t), Op::FrobeniusSq(a))
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self, a: Var) -> Result<Var> {
        let m = sym_part(self.mat(a)?);
        self.push(Value::Matrix(m), Op::Symmetrize(a))
    }

    /// Spectral function of a symmetric input. The input is symmetrized
    /// before decomposition; its gradient is returned symmetric.
    pub fn matfun(&mut self, a: Var, f: MatFn) -> Result<Var> {
        let s = SymMat::new(self.mat(a)?.clone())?;
        let eig = eig_sym(&s)?;
        f.check_domain(&eig.values)?;
        let d: Vec<f64> = eig.values.iter().map(|&l| f.eval(l)).collect();
        let y = eig.reconstruct_with(&d).into_matrix();
        self.push(Value::Matrix(y), Op::MatFun { x: a, f, eig })
    }

    /// `log λ_i(A)` for symmetric positive definite `A`, in descending order.
    pub fn log_eigvals(&mut self, a: Var) -> Result<Var> {
        let s = SymMat::new(self.mat(a)?.clone())?;
        let eig = eig_sym(&s)?;
        MatFn::Log.check_domain(&eig.values)?;
        let v = eig.values.iter().map(|l| l.ln()).collect();
        self.push(Value::Vector(v), Op::LogEigvals { x: a, eig })
    }

    /// `X + Xᵀ` from a lower-triangular fill, see
    /// [`sym_from_triangular`](crate::linalg::sym_from_triangular).
    pub fn sym_from_tri(&mut self, x: Var) -> Result<Var> {
        let m = crate::linalg::sym_from_triangular(self.vec(x)?)?.into_matrix();
        self.push(Value::Matrix(m), Op::SymFromTri(x))
    }

    /// The `n×n` plane factor for angle `theta[k]` in plane `(i, j)`.
    pub fn plane(&mut self, theta: Var, k: usize, sign: Sign, i: usize, j: usize, n: usize) -> Result<Var> {
        let t = *self
            .vec(theta)?
            .get(k)
            .ok_or_else(|| Error::Dimension(format!("angle index {k} out of range")))?;
        let m = crate::isometry::embed_plane(t, sign, i, j, n)?.matrix().clone();
        self.push(Value::Matrix(m), Op::Plane { theta, k, sign, i, j })
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.vec(x)?;
        if start + len > v.len() {
            return Err(Error::Dimension(format!(
                "slice {start}..{} of a length-{} vector",
                start + len,
                v.len()
            )));
        }
        let s = v[start..start + len].to_vec();
        self.push(Value::Vector(s), Op::Slice(x, start, len))
    }

    pub fn element(&mut self, x: Var, k: usize) -> Result<Var> {
        let v = *self
            .vec(x)?
            .get(k)
            .ok_or_else(|| Error::Dimension(format!("element {k} out of range")))?;
        self.push(Value::Scalar(v), Op::Element(x, k))
    }

    pub fn sum_sq(&mut self, x: Var) -> Result<Var> {
        let s = self.vec(x)?.iter().map(|a| a * a).sum();
        self.push(Value::Scalar(s), Op::SumSq(x))
    }

    /// `Σ|x_i|`, with subgradient 0 at 0.
    pub fn abs_sum(&mut self, x: Var) -> Result<Var> {
        let s = self.vec(x)?.iter().map(|a| a.abs()).sum();
        self.push(Value::Scalar(s), Op::AbsSum(x))
    }

    /// `max_i |x_i|`; the gradient goes to the first maximizer.
    pub fn max_abs(&mut self, x: Var) -> Result<Var> {
        let v = self.vec(x)?;
        let mut best = 0;
        for (i, a) in v.iter().enumerate() {
            if a.abs() > v[best].abs() {
                best = i;
            }
        }
        let m = v.get(best).map(|a| a.abs()).unwrap_or(0.0);
        self.push(Value::Scalar(m), Op::MaxAbs(x, best))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let s = self.sc(x)?;
        self.push(Value::Scalar(s * s), Op::Square(x))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.sc(a)? * self.sc(b)?;
        self.push(Value::Scalar(v), Op::Mul(a, b))
    }

    /// `log(1 + e^x)`, evaluated as `max(x, 0) + log1p(e^{-|x|})`.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let v = softplus(self.sc(x)?);
        self.push(Value::Scalar(v), Op::Softplus(x))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        self.sc(out)?;
        let mut grads: Vec<Option<Value>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Value::Scalar(1.0));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Adjoint of `v` after [`backward`](Self::backward); zero when `v` does
    /// not influence the output.
    pub fn grad(&self, v: Var) -> Result<Value> {
        let grads = self
            .grads
            .as_ref()
            .ok_or_else(|| Error::Tape("gradient requested before backward".into()))?;
        Ok(match &grads[v.0] {
            Some(g) => g.clone(),
            None => self.value(v).zeros_like(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Value>], target: Var, delta: Value) {
        match &mut grads[target.0] {
            Some(g) => {
                for (a, b) in g.as_flat_mut().iter_mut().zip(delta.as_flat()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, g: &Value, grads: &mut [Option<Value>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let mut ng = g.clone();
                ng.as_flat_mut().iter_mut().for_each(|x| *x = -*x);
                self.accumulate(grads, *b, ng);
            }
            Op::Scale(a, c) => {
                let mut sg = g.clone();
                sg.as_flat_mut().iter_mut().for_each(|x| *x *= c);
                self.accumulate(grads, *a, sg);
            }
            Op::MatMul(a, b) => {
                let gm = g.matrix()?;
                let am = self.mat(*a)?;
                let bm = self.mat(*b)?;
                let mut ga = gm.mul_unchecked(&bm.transpose());
                if self.corrupt_adjoint {
                    ga = ga.scale(1.1);
                }
                let gb = am.transpose().mul_unchecked(gm);
                self.accumulate(grads, *a, Value::Matrix(ga));
                self.accumulate(grads, *b, Value::Matrix(gb));
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, Value::Matrix(g.matrix()?.transpose()));
            }
            Op::MatInv(a) => {
                let yt = node.value.matrix()?.transpose();
                let ga = yt.mul_unchecked(g.matrix()?).mul_unchecked(&yt).scale(-1.0);
                self.accumulate(grads, *a, Value::Matrix(ga));
            }
            Op::Hadamard(a, b) => {
                let ga = self.zip_values(g, self.value(*b), |x, y| x * y);
                let gb = self.zip_values(g, self.value(*a), |x, y| x * y);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Trace(a) => {
                let n = self.mat(*a)?.n();
                self.accumulate(grads, *a, Value::Matrix(Matrix::identity(n).scale(g.scalar()?)));
            }
            Op::FrobeniusSq(a) => {
                let ga = self.mat(*a)?.scale(2.0 * g.scalar()?);
                self.accumulate(grads, *a, Value::Matrix(ga));
            }
            Op::Symmetrize(a) => {
                self.accumulate(grads, *a, Value::Matrix(sym_part(g.matrix()?)));
            }
            Op::MatFun { x, f, eig } => {
                let k = &eig.vectors;
                let inner = k.transpose().mul_unchecked(g.matrix()?).mul_unchecked(k);
                let weighted = inner.zip_map(&loewner(&eig.values, *f), |a, b| a * b);
                let ga = k.mul_unchecked(&weighted).mul_unchecked(&k.transpose());
                self.accumulate(grads, *x, Value::Matrix(sym_part(&ga)));
            }
            Op::LogEigvals { x, eig } => {
                let gv = g.vector()?;
                let w: Vec<f64> = gv.iter().zip(&eig.values).map(|(a, l)| a / l).collect();
                let ga = eig.reconstruct_with(&w).into_matrix();
                self.accumulate(grads, *x, Value::Matrix(ga));
            }
            Op::SymFromTri(x) => {
                let gm = g.matrix()?;
                let len = self.vec(*x)?.len();
                let n = tri_dim(len).expect("checked on record");
                let mut gx = Vec::with_capacity(len);
                for i in 0..n {
                    for j in 0..=i {
                        if i == j {
                            gx.push(2.0 * gm.get(i, i));
                        } else {
                            gx.push(gm.get(i, j) + gm.get(j, i));
                        }
                    }
                }
                self.accumulate(grads, *x, Value::Vector(gx));
            }
            Op::Plane { theta, k, sign, i, j } => {
                let gm = g.matrix()?;
                let t = self.vec(*theta)?[*k];
                let (s, c) = t.sin_cos();
                let d = match sign {
                    Sign::Plus => [-s, -c, c, -s],
                    Sign::Minus => [-s, c, c, s],
                };
                let gt = gm.get(*i, *i) * d[0]
                    + gm.get(*i, *j) * d[1]
                    + gm.get(*j, *i) * d[2]
                    + gm.get(*j, *j) * d[3];
                let mut gv = vec![0.0; self.vec(*theta)?.len()];
                gv[*k] = gt;
                self.accumulate(grads, *theta, Value::Vector(gv));
            }
            Op::Slice(x, start, len) => {
                let mut gv = vec![0.0; self.vec(*x)?.len()];
                gv[*start..start + len].copy_from_slice(g.vector()?);
                self.accumulate(grads, *x, Value::Vector(gv));
            }
            Op::Element(x, k) => {
                let mut gv = vec![0.0; self.vec(*x)?.len()];
                gv[*k] = g.scalar()?;
                self.accumulate(grads, *x, Value::Vector(gv));
            }
            Op::SumSq(x) => {
                let s = 2.0 * g.scalar()?;
                let gv = self.vec(*x)?.iter().map(|a| s * a).collect();
                self.accumulate(grads, *x, Value::Vector(gv));
            }
            Op::AbsSum(x) => {
                let s = g.scalar()?;
                let gv = self
                    .vec(*x)?
                    .iter()
                    .map(|&a| if a == 0.0 { 0.0 } else { s * a.signum() })
                    .collect();
                self.accumulate(grads, *x, Value::Vector(gv));
            }
            Op::MaxAbs(x, best) => {
                let v = self.vec(*x)?;
                let mut gv = vec![0.0; v.len()];
                if let Some(&a) = v.get(*best) {
                    if a != 0.0 {
                        gv[*best] = g.scalar()? * a.signum();
                    }
                }
                self.accumulate(grads, *x, Value::Vector(gv));
            }
            Op::Square(x) => {
                let gx = 2.0 * self.sc(*x)? * g.scalar()?;
                self.accumulate(grads, *x, Value::Scalar(gx));
            }
            Op::Mul(a, b) => {
                let gs = g.scalar()?;
                let (av, bv) = (self.sc(*a)?, self.sc(*b)?);
                self.accumulate(grads, *a, Value::Scalar(gs * bv));
                self.accumulate(grads, *b, Value::Scalar(gs * av));
            }
            Op::Softplus(x) => {
                let gx = g.scalar()? * sigmoid(self.sc(*x)?);
                self.accumulate(grads, *x, Value::Scalar(gx));
            }
        }
        Ok(())
    }

    fn zip_values(&self, a: &Value, b: &Value, f: impl Fn(f64, f64) -> f64) -> Value {
        let mut out = a.clone();
        for (o, y) in out.as_flat_mut().iter_mut().zip(b.as_flat()) {
            *o = f(*o, *y);
        }
        out
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `max_k |analytic_k − numeric_k| / max(1e-8, |numeric_k|)`.
    pub max_rel_error: f64,
    /// Coordinate attaining the maximum.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Checks the gradient of a scalar function of a flat parameter vector.
///
/// `f` receives a fresh tape and the leaf holding `params`, and returns the
/// output node. Numeric derivatives use central differences with step `h`,
/// evaluated through the same forward pass.
pub fn grad_check<F>(f: F, params: &[f64], h: f64, corrupt: bool) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let new_tape = || {
        if corrupt {
            Tape::with_corrupted_adjoint()
        } else {
            Tape::new()
        }
    };
    let mut tape = new_tape();
    let x = tape.vector(params.to_vec())?;
    let out = f(&mut tape, x)?;
    tape.backward(out)?;
    let analytic = tape.grad(x)?.vector()?.to_vec();

    let eval = |p: Vec<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let x = t.vector(p)?;
        let out = f(&mut t, x)?;
        t.value(out).scalar()
    };
    let mut numeric = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut plus = params.to_vec();
        plus[k] += h;
        let mut minus = params.to_vec();
        minus[k] -= h;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * h));
    }
    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs() / n.abs().max(1e-8);
        if e > max_rel_error || e.is_nan() {
            max_rel_error = e;
            worst_index = k;
        }
    }
    Ok(GradCheck {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}
