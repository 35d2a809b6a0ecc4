//! Rotations and reflections assembled from planar Givens factors, and the
//! congruence action `M ⊚ P = M P Mᵀ` of `GL(n)` on SPD points.
//!
//! Pair order is fixed: `(0,1), (0,2), …, (0,n-1), (1,2), …`. The product is
//! accumulated by left multiplication, `M ← R_ij · M`, in that order, so the
//! last pair ends up leftmost. Checkpoints depend on this convention.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::manifold::{congruence, SpdPoint};

/// Name of the pair-order convention, recorded in checkpoints.
pub const PAIR_ORDER: &str = "lexicographic-left-multiply";

/// Orthogonality tolerance for rotation/reflection kinds.
pub const ORTHO_TOL: f64 = 1e-9;
/// Minimum `|det|` for a general isometry matrix.
pub const DET_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    /// Rotation, determinant `+1`.
    Plus,
    /// Reflection, determinant `-1`.
    Minus,
}

/// One angle per coordinate pair `i < j`, in lexicographic order.
/// Angles are unconstrained; see [`AngleVector::wrapped`].
#[derive(Clone, Debug, PartialEq)]
pub struct AngleVector(Vec<f64>);

impl AngleVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("angle vector"));
        }
        pair_dim(theta.len())?;
        Ok(AngleVector(theta))
    }

    pub fn zeros(n: usize) -> Self {
        AngleVector(vec![0.0; pair_count(n)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        pair_dim(self.0.len()).expect("checked at construction")
    }

    /// Angles reduced to `[0, 2π)`, for reporting.
    pub fn wrapped(&self) -> Vec<f64> {
        self.0.iter().map(|t| t.rem_euclid(std::f64::consts::TAU)).collect()
    }
}

/// `n(n-1)/2`.
pub const fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Matrix size for an angle vector of length `len`.
pub fn pair_dim(len: usize) -> Result<usize> {
    (1..=len + 2)
        .find(|&n| pair_count(n) == len)
        .ok_or_else(|| Error::Dimension(format!("{len} angles do not fill the pairs of any n")))
}

/// The pairs `i < j` in the fixed order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

/// `R±(θ) = [[cos θ, ∓sin θ], [sin θ, ±cos θ]]`, row-major.
pub fn givens(theta: f64, sign: Sign) -> [f64; 4] {
    let (s, c) = theta.sin_cos();
    match sign {
        Sign::Plus => [c, -s, s, c],
        Sign::Minus => [c, s, s, -c],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsometryKind {
    Rotation,
    Reflection,
    General,
}

/// An invertible matrix acting on SPD points by congruence.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometryMatrix {
    m: Matrix,
    kind: IsometryKind,
}

impl IsometryMatrix {
    /// Checks orthogonality for rotation/reflection kinds and `|det| >= 1e-10`
    /// for the general kind.
    pub fn new(m: Matrix, kind: IsometryKind) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonFinite("isometry matrix"));
        }
        match kind {
            IsometryKind::Rotation | IsometryKind::Reflection => {
                let r = m
                    .transpose()
                    .mul_unchecked(&m)
                    .max_abs_diff(&Matrix::identity(m.n()));
                if r > ORTHO_TOL {
                    return Err(Error::Invalid(format!(
                        "matrix is not orthogonal (residual {r:e})"
                    )));
                }
            }
            IsometryKind::General => {
                let d = m.det();
                if d.abs() < DET_TOL {
                    return Err(Error::Singular {
                        pivot: d.abs(),
                        threshold: DET_TOL,
                    });
                }
            }
        }
        Ok(IsometryMatrix { m, kind })
    }

    pub fn identity(n: usize) -> Self {
        IsometryMatrix {
            m: Matrix::identity(n),
            kind: IsometryKind::Rotation,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn kind(&self) -> IsometryKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.m.n()
    }

    /// Matrix product. Orthogonal factors give a rotation or reflection by
    /// the sign of the determinant; anything else is `General`.
    pub fn compose(&self, other: &IsometryMatrix) -> Result<IsometryMatrix> {
        let m = self.m.matmul(&other.m)?;
        let kind = match (self.kind, other.kind) {
            (IsometryKind::General, _) | (_, IsometryKind::General) => IsometryKind::General,
            _ if m.det() > 0.0 => IsometryKind::Rotation,
            _ => IsometryKind::Reflection,
        };
        Ok(IsometryMatrix { m, kind })
    }
}

/// Identity except for the `(i,i), (i,j), (j,i), (j,j)` block, which holds
/// `givens(theta, sign)`.
pub fn embed_plane(theta: f64, sign: Sign, i: usize, j: usize, n: usize) -> Result<IsometryMatrix> {
    if !(i < j && j < n) {
        return Err(Error::Dimension(format!(
            "plane ({i}, {j}) invalid for n = {n}"
        )));
    }
    let g = givens(theta, sign);
    let mut m = Matrix::identity(n);
    m.set(i, i, g[0]);
    m.set(i, j, g[1]);
    m.set(j, i, g[2]);
    m.set(j, j, g[3]);
    let kind = match sign {
        Sign::Plus => IsometryKind::Rotation,
        Sign::Minus => IsometryKind::Reflection,
    };
    Ok(IsometryMatrix { m, kind })
}

/// Left-multiplies `m` in place by the plane factor for `(i, j)`.
pub(crate) fn left_mul_plane(m: &mut Matrix, g: &[f64; 4], i: usize, j: usize) {
    let n = m.n();
    for c in 0..n {
        let a = m.get(i, c);
        let b = m.get(j, c);
        m.set(i, c, g[0] * a + g[1] * b);
        m.set(j, c, g[2] * a + g[3] * b);
    }
}

fn build(theta: &AngleVector, sign: Sign) -> Matrix {
    let n = theta.dim();
    let mut m = Matrix::identity(n);
    for (&t, (i, j)) in theta.as_slice().iter().zip(pairs(n)) {
        left_mul_plane(&mut m, &givens(t, sign), i, j);
    }
    m
}

/// `Rot(θ) = ∏_{i<j} R⁺_ij(θ_ij)`; determinant `+1`.
pub fn build_rotation(theta: &AngleVector) -> IsometryMatrix {
    IsometryMatrix {
        m: build(theta, Sign::Plus),
        kind: IsometryKind::Rotation,
    }
}

/// `Refl(θ) = ∏_{i<j} R⁻_ij(θ_ij)`; determinant `(-1)^{n(n-1)/2}`.
pub fn build_reflection(theta: &AngleVector) -> IsometryMatrix {
    IsometryMatrix {
        m: build(theta, Sign::Minus),
        kind: IsometryKind::Reflection,
    }
}

/// `M ⊚ P = M P Mᵀ`, symmetrized.
pub fn apply(m: &IsometryMatrix, p: &SpdPoint) -> Result<SpdPoint> {
    if m.n() != p.n() {
        return Err(Error::Dimension(format!(
            "isometry {}x{} on SPD_{}",
            m.n(),
            m.n(),
            p.n()
        )));
    }
    SpdPoint::new(congruence(&m.m, p.matrix()))
}

/// Geodesic reflection of `p` in the point `q`: `Q P⁻¹ Q`.
pub fn point_reflection(q: &SpdPoint, p: &SpdPoint) -> Result<SpdPoint> {
    if q.n() != p.n() {
        return Err(Error::Dimension("point reflection across dimensions".into()));
    }
    SpdPoint::new(congruence(q.matrix(), p.inverse().matrix()))
}
