//! Points of the SPD manifold, exponential and logarithm maps, the
//! vector-valued distance and the metrics read off from it.
//!
//! Every VVD-based quantity is computed on the symmetric conjugate
//! `P^{-1/2} Q P^{-1/2}`, which has the spectrum of `P^{-1} Q` but is
//! symmetric, so the Jacobi solver always returns a real spectrum.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, matfun_decomp, EigenDecomp, MatFn, Matrix, SymMat};

/// Relative conditioning floor for [`SpdPoint::new`].
pub const SPD_TOL: f64 = 1e-10;
/// Absolute tolerance used for "zero distance" claims.
pub const ZERO_DIST_TOL: f64 = 1e-8;

/// A symmetric positive definite matrix, stored together with its
/// eigendecomposition.
#[derive(Clone, Debug)]
pub struct SpdPoint {
    mat: SymMat,
    eig: EigenDecomp,
}

impl PartialEq for SpdPoint {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

impl SpdPoint {
    /// Validates positivity: rejects when `λ_min <= 1e-10 · λ_max`.
    pub fn new(mat: SymMat) -> Result<Self> {
        let eig = eig_sym(&mat)?;
        let max = eig.values.first().copied().unwrap_or(1.0);
        let min = eig.values.last().copied().unwrap_or(1.0);
        if !(max > 0.0) || !(min > SPD_TOL * max) {
            return Err(Error::NotPositiveDefinite { min, max });
        }
        Ok(SpdPoint { mat, eig })
    }

    /// For matrices that are positive by construction (`K diag(μ) Kᵀ` with
    /// every `μ > 0`).
    pub(crate) fn from_parts(mat: SymMat, eig: EigenDecomp) -> Self {
        debug_assert!(eig.values.iter().all(|&l| l > 0.0));
        SpdPoint { mat, eig }
    }

    fn from_spectral(e: &EigenDecomp, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = e.values.iter().map(|&l| f(l)).collect();
        if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain {
                op: "spd spectrum",
                eigenvalue: bad,
            });
        }
        let mat = e.reconstruct_with(&values);
        let mut vectors = e.vectors.clone();
        // keep the descending order if f is decreasing
        if values.len() > 1 && values[0] < values[values.len() - 1] {
            values.reverse();
            let n = values.len();
            let old = vectors.clone();
            for c in 0..n {
                for r in 0..n {
                    vectors.set(r, c, old.get(r, n - 1 - c));
                }
            }
        }
        Ok(SpdPoint::from_parts(mat, EigenDecomp { vectors, values }))
    }

    pub fn identity(n: usize) -> Self {
        SpdPoint {
            mat: SymMat::identity(n),
            eig: EigenDecomp {
                vectors: Matrix::identity(n),
                values: vec![1.0; n],
            },
        }
    }

    pub fn from_diag(d: &[f64]) -> Result<Self> {
        Self::new(SymMat::from_diag(d))
    }

    pub fn n(&self) -> usize {
        self.mat.n()
    }

    pub fn sym(&self) -> &SymMat {
        &self.mat
    }

    pub fn matrix(&self) -> &Matrix {
        self.mat.matrix()
    }

    pub fn eigen(&self) -> &EigenDecomp {
        &self.eig
    }

    pub fn sqrt(&self) -> SpdPoint {
        Self::from_spectral(&self.eig, f64::sqrt).expect("sqrt of a positive spectrum")
    }

    pub fn inv_sqrt(&self) -> SpdPoint {
        Self::from_spectral(&self.eig, |l| 1.0 / l.sqrt()).expect("positive spectrum")
    }

    pub fn inverse(&self) -> SpdPoint {
        Self::from_spectral(&self.eig, |l| 1.0 / l).expect("positive spectrum")
    }

    /// `P^α = exp(α log P)`.
    pub fn pow(&self, alpha: f64) -> Result<SpdPoint> {
        Self::from_spectral(&self.eig, |l| l.powf(alpha))
    }

    /// Matrix logarithm.
    pub fn log(&self) -> SymMat {
        matfun_decomp(&self.eig, MatFn::Log).expect("log of a positive spectrum")
    }

    /// Congruence `M P Mᵀ` re-validated as a point.
    pub fn congruence(&self, m: &Matrix) -> Result<SpdPoint> {
        if m.n() != self.n() {
            return Err(Error::Dimension(format!(
                "congruence by {}x{} on SPD_{}",
                m.n(),
                m.n(),
                self.n()
            )));
        }
        SpdPoint::new(congruence(m, self.matrix()))
    }

    fn same_dim(&self, other: &SpdPoint) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::Dimension(format!(
                "SPD_{} vs SPD_{}",
                self.n(),
                other.n()
            )));
        }
        Ok(())
    }
}

/// `M X Mᵀ`, symmetrized.
pub fn congruence(m: &Matrix, x: &Matrix) -> SymMat {
    let out = m.mul_unchecked(x).mul_unchecked(&m.transpose());
    SymMat::new(out).expect("finite congruence")
}

/// Matrix exponential of a symmetric matrix; always SPD.
pub fn exp_at_identity(u: &SymMat) -> Result<SpdPoint> {
    let e = eig_sym(u)?;
    SpdPoint::from_spectral(&e, f64::exp)
}

pub fn log_at_identity(p: &SpdPoint) -> SymMat {
    p.log()
}

/// `√B exp(√B⁻¹ U √B⁻¹) √B`.
pub fn exp_at(base: &SpdPoint, u: &SymMat) -> Result<SpdPoint> {
    if base.n() != u.n() {
        return Err(Error::Dimension("exp_at: base and tangent differ".into()));
    }
    let s = base.sqrt();
    let si = base.inv_sqrt();
    let inner = congruence(si.matrix(), u.matrix());
    let e = exp_at_identity(&inner)?;
    SpdPoint::new(congruence(s.matrix(), e.matrix()))
}

/// `√B log(√B⁻¹ Q √B⁻¹) √B`.
pub fn log_at(base: &SpdPoint, q: &SpdPoint) -> Result<SymMat> {
    base.same_dim(q)?;
    let s = base.sqrt();
    let si = base.inv_sqrt();
    let inner = SpdPoint::new(congruence(si.matrix(), q.matrix()))?;
    Ok(congruence(s.matrix(), inner.log().matrix()))
}

/// Log-eigenvalues of `P⁻¹Q`, sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct VvdVector(Vec<f64>);

impl VvdVector {
    /// Sorts the input descending. Rejects non-finite entries.
    pub fn new(mut v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vvd vector"));
        }
        v.sort_by(|a, b| b.total_cmp(a));
        Ok(VvdVector(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l2(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    pub fn linf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `Σ log((e^{-v/2} + e^{v/2}) / 2) = Σ log cosh(v/2)`.
    pub fn stein(&self) -> f64 {
        self.0.iter().map(|&x| log_cosh(0.5 * x)).sum()
    }
}

/// `log(cosh x)` without overflow.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// The vector-valued distance from `p` to `q`.
pub fn vvd(p: &SpdPoint, q: &SpdPoint) -> Result<VvdVector> {
    p.same_dim(q)?;
    let c = congruence(p.inv_sqrt().matrix(), q.matrix());
    let e = eig_sym(&c)?;
    MatFn::Log.check_domain(&e.values)?;
    VvdVector::new(e.values.iter().map(|l| l.ln()).collect())
}

/// Permutation-invariant norms applied to the VVD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Riemannian,
    F1,
    FInf,
    Stein,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Riemannian, Metric::F1, Metric::FInf, Metric::Stein];

    pub fn norm(self, v: &VvdVector) -> f64 {
        match self {
            Metric::Riemannian => v.l2(),
            Metric::F1 => v.l1(),
            Metric::FInf => v.linf(),
            Metric::Stein => v.stein(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Riemannian => "riemannian",
            Metric::F1 => "f1",
            Metric::FInf => "f_inf",
            Metric::Stein => "stein",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "riemannian" => Ok(Metric::Riemannian),
            "f1" => Ok(Metric::F1),
            "f_inf" | "finf" => Ok(Metric::FInf),
            "stein" => Ok(Metric::Stein),
            _ => Err(Error::Invalid(format!("unknown metric `{s}`"))),
        }
    }
}

pub fn dist(p: &SpdPoint, q: &SpdPoint, metric: Metric) -> Result<f64> {
    Ok(metric.norm(&vvd(p, q)?))
}

/// Squared distance; what the scoring functions consume.
pub fn dist_sq(p: &SpdPoint, q: &SpdPoint, metric: Metric) -> Result<f64> {
    let v = vvd(p, q)?;
    Ok(match metric {
        Metric::Riemannian => v.as_slice().iter().map(|x| x * x).sum(),
        m => m.norm(&v).powi(2),
    })
}

/// `sqrt(tr P + tr Q − 2 sqrt(tr(PQ)))`, with the radicand clamped at zero.
///
/// This follows the trace formula with `tr(PQ)` under the inner root. The
/// usual Bures-Wasserstein distance uses `tr((P^{1/2} Q P^{1/2})^{1/2})`
/// there instead; the two agree only in special cases (e.g. `n = 1`). It is
/// not a function of the VVD.
pub fn dist_bures_wasserstein(p: &SpdPoint, q: &SpdPoint) -> Result<f64> {
    p.same_dim(q)?;
    let tr_pq = p.matrix().dot(q.matrix());
    let r = p.matrix().trace() + q.matrix().trace() - 2.0 * tr_pq.max(0.0).sqrt();
    Ok(r.max(0.0).sqrt())
}

/// `‖log P − log Q‖_F`.
pub fn dist_log_euclidean(p: &SpdPoint, q: &SpdPoint) -> Result<f64> {
    p.same_dim(q)?;
    Ok(p.log().sub(&q.log())?.matrix().frobenius())
}
