//! Random matrices for tests, benchmarks and the demo.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{eig_sym, Matrix, SymMat};
use crate::manifold::{exp_at_identity, SpdPoint};

/// Symmetric matrix with i.i.d. uniform entries in `[-scale, scale]`.
pub fn sym<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> SymMat {
    let data = (0..n * n).map(|_| rng.gen_range(-scale..=scale)).collect();
    SymMat::from_vec(n, data).expect("finite")
}

/// Random symmetric matrix with every eigenvalue in `[-radius, radius]`:
/// a random orthogonal frame with uniform eigenvalues.
pub fn sym_with_spectrum<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> SymMat {
    let k = orthogonal(rng, n);
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
    let kd = k.mul_unchecked(&Matrix::from_diag(&d));
    SymMat::new(kd.mul_unchecked(&k.transpose())).expect("finite")
}

/// `exp(U)` with the spectrum of `U` in `[-radius, radius]`.
pub fn spd<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> SpdPoint {
    exp_at_identity(&sym_with_spectrum(rng, n, radius)).expect("exp is SPD")
}

/// Haar-ish orthogonal matrix from the eigenvectors of a Gaussian symmetric
/// matrix.
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let data: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    let g = SymMat::from_vec(n, data).expect("finite");
    eig_sym(&g).expect("jacobi converges").vectors
}

/// Invertible matrix with standard normal entries, re-drawn while
/// `|det| < 1e-6`.
pub fn gl<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    loop {
        let data: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        let m = Matrix::from_vec(n, data).expect("square");
        if m.det().abs() >= 1e-6 {
            return m;
        }
    }
}
