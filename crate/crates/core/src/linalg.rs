//! Dense square-matrix algebra, a cyclic Jacobi eigensolver for symmetric
//! matrices and spectral matrix functions built on it.
//!
//! Storage is row-major `f64`. Everything here is a plain value type; nothing
//! holds interior state, so values can be shared freely between threads.

use std::fmt;

use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;
/// Sweep cap for the Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative pivot threshold below which a matrix counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Dense square matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.n, self.n)?;
        for i in 0..self.n {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Matrix {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &x) in d.iter().enumerate() {
            m.data[i * n + i] = x;
        }
        m
    }

    /// Builds a matrix from `n*n` row-major entries.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Matrix { n, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension(format!(
                    "row of length {} in a {n}-row matrix",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    fn check_same(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Dimension(format!(
                "{op}: {}x{} vs {}x{}",
                self.n, self.n, other.n, other.n
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "matmul")?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * n..(k + 1) * n];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Matrix { n, data: out }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub(crate) fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|a| a * s)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// Frobenius inner product `sum_ij a_ij b_ij`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Matrix {
        let n = self.n;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.n;
        let scale = self.max_abs();
        let threshold = SINGULAR_TOL * scale;
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(n).data;
        for col in 0..n {
            let (piv, pval) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= threshold || pval == 0.0 {
                return Err(Error::Singular {
                    pivot: pval,
                    threshold,
                });
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                    inv.swap(col * n + k, piv * n + k);
                }
            }
            let d = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= d;
                inv[col * n + k] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..n {
                    a[r * n + k] -= f * a[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
        Ok(Matrix { n, data: inv })
    }

    /// Determinant via LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let (piv, pval) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval == 0.0 {
                return 0.0;
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
            }
        }
        det
    }
}

/// Real symmetric matrix. Symmetry is exact: construction averages the input
/// with its transpose.
#[derive(Clone, PartialEq)]
pub struct SymMat(Matrix);

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.0)
    }
}

impl SymMat {
    /// Symmetrizes `m` as `(m + mᵀ)/2`. Rejects non-finite entries.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let s = m.symmetric_part();
        debug_assert!((0..s.n).all(|i| (0..s.n).all(|j| s.get(i, j) == s.get(j, i))));
        Ok(SymMat(s))
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Matrix::from_vec(n, data)?)
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(Matrix::zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(Matrix::identity(n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        SymMat(Matrix::from_diag(d))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat(self.0.scale(s))
    }

    pub fn add(&self, other: &SymMat) -> Result<SymMat> {
        Ok(SymMat(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &SymMat) -> Result<SymMat> {
        Ok(SymMat(self.0.sub(&other.0)?))
    }

    /// Hadamard product of two symmetric matrices is symmetric.
    pub fn hadamard(&self, other: &SymMat) -> Result<SymMat> {
        Ok(SymMat(self.0.hadamard(&other.0)?))
    }

    /// Lower-triangular entries, row-wise: `(0,0), (1,0), (1,1), (2,0), ...`.
    pub fn lower_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(tri_len(n));
        for i in 0..n {
            for j in 0..=i {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

impl AsRef<Matrix> for SymMat {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// `n(n+1)/2`.
pub const fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Inverse of [`tri_len`]; `None` when `len` is not a triangular number.
pub fn tri_dim(len: usize) -> Option<usize> {
    let n = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n..=n + 1).find(|&k| tri_len(k) == len)
}

/// Builds `U = X + Xᵀ` where `X` is lower-triangular and filled row-wise
/// from `x`.
pub fn sym_from_triangular(x: &[f64]) -> Result<SymMat> {
    let n = tri_dim(x.len()).ok_or_else(|| {
        Error::Dimension(format!("length {} is not a triangular number", x.len()))
    })?;
    let mut m = Matrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            let v = x[k];
            k += 1;
            if i == j {
                m.set(i, i, 2.0 * v);
            } else {
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
    }
    SymMat::new(m)
}

/// Orthogonal eigendecomposition `m = K diag(λ) Kᵀ` with `λ` sorted
/// descending.
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    /// Columns are eigenvectors.
    pub vectors: Matrix,
    pub values: Vec<f64>,
}

impl EigenDecomp {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `K diag(d) Kᵀ`, symmetrized.
    pub fn reconstruct_with(&self, d: &[f64]) -> SymMat {
        let n = self.n();
        let k = &self.vectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for (l, &dl) in d.iter().enumerate() {
                    s += k.get(i, l) * dl * k.get(j, l);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        SymMat(out)
    }

    pub fn reconstruct(&self) -> SymMat {
        self.reconstruct_with(&self.values)
    }

    /// Eigenvector `i` (column `i` of `K`).
    pub fn vector(&self, i: usize) -> Vec<f64> {
        (0..self.n()).map(|r| self.vectors.get(r, i)).collect()
    }
}

/// Symmetric eigendecomposition by cyclic (row-order) Jacobi sweeps.
pub fn eig_sym(m: &SymMat) -> Result<EigenDecomp> {
    let n = m.n();
    let mut a = m.matrix().as_slice().to_vec();
    let mut v = Matrix::identity(n).data;
    let norm = m.matrix().frobenius();
    let tol = JACOBI_TOL * norm;

    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let residual = off(&a);
        if residual <= tol {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));

    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        // sign: largest-magnitude entry positive (first one on ties)
        let mut big = 0.0f64;
        let mut sign = 1.0;
        for r in 0..n {
            let x = v[r * n + src];
            if x.abs() > big.abs() {
                big = x;
                sign = if x < 0.0 { -1.0 } else { 1.0 };
            }
        }
        for r in 0..n {
            vectors.set(r, dst, sign * v[r * n + src]);
        }
    }
    Ok(EigenDecomp { vectors, values })
}

/// Scalar function applied to a symmetric matrix through its spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatFn {
    Exp,
    Log,
    Sqrt,
    InvSqrt,
    Pow(f64),
}

impl MatFn {
    pub fn name(self) -> &'static str {
        match self {
            MatFn::Exp => "exp",
            MatFn::Log => "log",
            MatFn::Sqrt => "sqrt",
            MatFn::InvSqrt => "inv_sqrt",
            MatFn::Pow(_) => "pow",
        }
    }

    pub fn needs_positive(self) -> bool {
        !matches!(self, MatFn::Exp)
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            MatFn::Exp => x.exp(),
            MatFn::Log => x.ln(),
            MatFn::Sqrt => x.sqrt(),
            MatFn::InvSqrt => 1.0 / x.sqrt(),
            MatFn::Pow(a) => x.powf(a),
        }
    }

    pub fn deriv(self, x: f64) -> f64 {
        match self {
            MatFn::Exp => x.exp(),
            MatFn::Log => 1.0 / x,
            MatFn::Sqrt => 0.5 / x.sqrt(),
            MatFn::InvSqrt => -0.5 / (x * x.sqrt()),
            MatFn::Pow(a) => a * x.powf(a - 1.0),
        }
    }

    /// Checks the spectrum against this function's domain.
    pub fn check_domain(self, values: &[f64]) -> Result<()> {
        if self.needs_positive() {
            if let Some(&bad) = values.iter().find(|&&l| !(l > 0.0)) {
                return Err(Error::Domain {
                    op: self.name(),
                    eigenvalue: bad,
                });
            }
        }
        Ok(())
    }
}

/// `K diag(f(λ)) Kᵀ` from an existing decomposition.
pub fn matfun_decomp(e: &EigenDecomp, f: MatFn) -> Result<SymMat> {
    f.check_domain(&e.values)?;
    let d: Vec<f64> = e.values.iter().map(|&l| f.eval(l)).collect();
    let out = e.reconstruct_with(&d);
    if !out.matrix().is_finite() {
        return Err(Error::NonFinite(f.name()));
    }
    Ok(out)
}

pub fn matfun(m: &SymMat, f: MatFn) -> Result<SymMat> {
    matfun_decomp(&eig_sym(m)?, f)
}

/// Inverse of a symmetric matrix; the result is symmetrized.
pub fn sym_inverse(m: &SymMat) -> Result<SymMat> {
    SymMat::new(m.matrix().inverse()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut impl Rng, n: usize, scale: f64) -> SymMat {
        let data = (0..n * n).map(|_| rng.gen_range(-scale..scale)).collect();
        SymMat::from_vec(n, data).unwrap()
    }

    #[test]
    fn triangular_fill() {
        assert_eq!(sym_from_triangular(&[0.0; 3]).unwrap(), SymMat::zeros(2));
        let one = sym_from_triangular(&[1.5]).unwrap();
        assert_eq!(one.matrix().as_slice(), &[3.0]);
        let m = sym_from_triangular(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.matrix().as_slice(), &[2.0, 2.0, 2.0, 6.0]);
        assert!(matches!(
            sym_from_triangular(&[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
        assert_eq!(tri_dim(0), Some(0));
        assert_eq!(tri_dim(21), Some(6));
        assert_eq!(tri_dim(22), None);
    }

    #[test]
    fn symmetrizes_on_construction() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[4.0, 1.0]]).unwrap();
        let s = SymMat::new(m).unwrap();
        assert_eq!(s.get(0, 1), 3.0);
        assert_eq!(s.get(1, 0), 3.0);
        let bad = Matrix::from_rows(&[&[f64::NAN, 0.0], &[0.0, 1.0]]).unwrap();
        assert!(SymMat::new(bad).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let e = eig_sym(&SymMat::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let e = eig_sym(&SymMat::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.vectors, Matrix::identity(2));
    }

    #[test]
    fn eig_two_by_two() {
        let m = SymMat::from_vec(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = eig_sym(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_random_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 8, 16] {
            for _ in 0..10 {
                let m = random_sym(&mut rng, n, 5.0);
                let e = eig_sym(&m).unwrap();
                let k = &e.vectors;
                let ktk = k.transpose().matmul(k).unwrap();
                assert!(ktk.max_abs_diff(&Matrix::identity(n)) <= 1e-10);
                let rec = e.reconstruct();
                let bound = 1e-9 * (1.0 + m.matrix().max_abs());
                assert!(rec.matrix().max_abs_diff(m.matrix()) <= bound);
                assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
                // deterministic
                let again = eig_sym(&m).unwrap();
                assert_eq!(again.values, e.values);
                assert_eq!(again.vectors, e.vectors);
            }
        }
    }

    #[test]
    fn eig_zero_and_degenerate() {
        let e = eig_sym(&SymMat::zeros(3)).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
        let e = eig_sym(&SymMat::identity(4).scale(2.0)).unwrap();
        assert_eq!(e.values, vec![2.0; 4]);
    }

    #[test]
    fn sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_sym(&mut rng, 6, 1.0);
        let e = eig_sym(&m).unwrap();
        for c in 0..6 {
            let col = e.vector(c);
            let big = col
                .iter()
                .fold(0.0f64, |b, &x| if x.abs() > b.abs() { x } else { b });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn matfun_closed_forms() {
        let e = matfun(&SymMat::zeros(3), MatFn::Exp).unwrap();
        assert_eq!(e, SymMat::identity(3));
        let t = 0.7_f64;
        let m = SymMat::from_vec(2, vec![0.0, t, t, 0.0]).unwrap();
        let e = matfun(&m, MatFn::Exp).unwrap();
        let want = [t.cosh(), t.sinh(), t.sinh(), t.cosh()];
        for (a, b) in e.matrix().as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let d = [0.3, -1.2, 2.5];
        let e = matfun(&SymMat::from_diag(&d), MatFn::Exp).unwrap();
        for i in 0..3 {
            assert!((e.get(i, i) - d[i].exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn matfun_domain_errors() {
        let m = SymMat::from_diag(&[1.0, -0.5]);
        for f in [MatFn::Log, MatFn::Sqrt, MatFn::InvSqrt, MatFn::Pow(0.5)] {
            match matfun(&m, f) {
                Err(Error::Domain { eigenvalue, .. }) => assert_eq!(eigenvalue, -0.5),
                other => panic!("expected domain error, got {other:?}"),
            }
        }
        assert!(matfun(&m, MatFn::Exp).is_ok());
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 4, 7] {
            for _ in 0..20 {
                let u = random_sym(&mut rng, n, 1.0);
                let e = eig_sym(&u).unwrap();
                // rescale spectrum into [-3, 3]
                let r = e.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
                let u = u.scale(3.0 / r.max(1.0));
                let back = matfun(&matfun(&u, MatFn::Exp).unwrap(), MatFn::Log).unwrap();
                assert!(back.matrix().max_abs_diff(u.matrix()) <= 1e-8);
            }
        }
    }

    #[test]
    fn dense_ops() {
        let i3 = Matrix::identity(3);
        assert_eq!(i3.inverse().unwrap(), i3);
        assert_eq!(Matrix::from_diag(&[1.0, 2.0, 3.0]).trace(), 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Matrix::from_vec(4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        assert_eq!(a.hadamard(&Matrix::filled(4, 1.0)).unwrap(), a);
        let ai = a.inverse().unwrap();
        assert!(ai.matmul(&a).unwrap().max_abs_diff(&Matrix::identity(4)) < 1e-9);
        let singular = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(singular.inverse(), Err(Error::Singular { .. })));
        assert!((Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap().det() + 2.0).abs() < 1e-15);
        assert!(a.matmul(&Matrix::identity(3)).is_err());
    }
}
