//! Gyrovector-space operations on SPD matrices with the identity as origin.
//!
//! `P ⊕ Q = √P Q √P` translates `Q` along the geodesic from `I` to `P`;
//! `⊖P = P⁻¹`; `α ⊗ P = P^α`. Gyro-addition is neither commutative nor
//! associative: the gyration `gyr(a, b)` measures the failure.

use crate::error::{Error, Result};
use crate::linalg::{matfun, MatFn, SymMat};
use crate::manifold::{congruence, SpdPoint};

fn same_dim(a: &SpdPoint, b: &SpdPoint) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::Dimension(format!(
            "gyro operands in SPD_{} and SPD_{}",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

/// `P ⊕ Q = √P Q √P`.
pub fn gyro_add(p: &SpdPoint, q: &SpdPoint) -> Result<SpdPoint> {
    same_dim(p, q)?;
    SpdPoint::new(congruence(p.sqrt().matrix(), q.matrix()))
}

/// `⊖P = P⁻¹`.
pub fn gyro_neg(p: &SpdPoint) -> SpdPoint {
    p.inverse()
}

/// `a ⊖ b = a ⊕ (⊖b)`.
pub fn gyro_sub(a: &SpdPoint, b: &SpdPoint) -> Result<SpdPoint> {
    gyro_add(a, &gyro_neg(b))
}

/// `gyr(a, b) c = ⊖(a ⊕ b) ⊕ (a ⊕ (b ⊕ c))`, evaluated literally.
pub fn gyration(a: &SpdPoint, b: &SpdPoint, c: &SpdPoint) -> Result<SpdPoint> {
    same_dim(a, b)?;
    same_dim(b, c)?;
    let ab = gyro_add(a, b)?;
    let abc = gyro_add(a, &gyro_add(b, c)?)?;
    gyro_add(&gyro_neg(&ab), &abc)
}

/// Co-operation `a ⊞ b = a ⊕ gyr(a, ⊖b) b`.
pub fn gyro_coadd(a: &SpdPoint, b: &SpdPoint) -> Result<SpdPoint> {
    let g = gyration(a, &gyro_neg(b), b)?;
    gyro_add(a, &g)
}

/// `a ⊟ b = a ⊞ (⊖b)`.
pub fn gyro_cosub(a: &SpdPoint, b: &SpdPoint) -> Result<SpdPoint> {
    gyro_coadd(a, &gyro_neg(b))
}

/// `α ⊗ P = P^α`.
pub fn scalar_mul(alpha: f64, p: &SpdPoint) -> Result<SpdPoint> {
    p.pow(alpha)
}

/// Matrix scaling `A ⊗ P = exp(A ⊙ log P)`.
pub fn matrix_scale(a: &SymMat, p: &SpdPoint) -> Result<SpdPoint> {
    if a.n() != p.n() {
        return Err(Error::Dimension(format!(
            "scaling matrix {}x{} on SPD_{}",
            a.n(),
            a.n(),
            p.n()
        )));
    }
    let w = a.hadamard(&p.log())?;
    let e = matfun(&w, MatFn::Exp)?;
    SpdPoint::new(e)
}

/// The unique `x` with `a ⊕ x = b`: `x = (⊖a) ⊕ b`.
pub fn solve_left(a: &SpdPoint, b: &SpdPoint) -> Result<SpdPoint> {
    gyro_add(&gyro_neg(a), b)
}

/// The unique `x` with `x ⊕ a = b`: `x = b ⊟ a`.
pub fn solve_right(a: &SpdPoint, b: &SpdPoint) -> Result<SpdPoint> {
    let x = gyro_cosub(b, a)?;
    debug_assert!({
        let back = gyro_add(&x, a)?;
        let scale = 1.0 + b.matrix().max_abs();
        back.matrix().max_abs_diff(b.matrix()) <= 1e-6 * scale
    });
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::manifold::vvd;
    use crate::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &SpdPoint, b: &SpdPoint, tol: f64) {
        let d = a.matrix().max_abs_diff(b.matrix());
        assert!(d <= tol, "max abs diff {d:e} > {tol:e}");
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = sample::spd(&mut rng, 4, 1.0);
        let i = SpdPoint::identity(4);
        assert_close(&gyro_add(&i, &p).unwrap(), &p, 1e-12);
        assert_close(&gyro_add(&p, &i).unwrap(), &p, 1e-12);
        assert_close(&gyro_neg(&i), &i, 0.0);
    }

    #[test]
    fn diagonal_addition_multiplies() {
        let a = SpdPoint::from_diag(&[2.0, 0.5, 3.0]).unwrap();
        let b = SpdPoint::from_diag(&[1.5, 4.0, 0.1]).unwrap();
        let s = gyro_add(&a, &b).unwrap();
        let want = SpdPoint::from_diag(&[3.0, 2.0, 0.3]).unwrap();
        assert_close(&s, &want, 1e-14);
    }

    #[test]
    fn inverses_both_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let i = SpdPoint::identity(5);
        for _ in 0..10 {
            let p = sample::spd(&mut rng, 5, 1.5);
            assert_close(&gyro_add(&gyro_neg(&p), &p).unwrap(), &i, 1e-9);
            assert_close(&gyro_add(&p, &gyro_neg(&p)).unwrap(), &i, 1e-9);
        }
    }

    #[test]
    fn trivial_gyrations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = sample::spd(&mut rng, 3, 1.0);
        let b = sample::spd(&mut rng, 3, 1.0);
        let c = sample::spd(&mut rng, 3, 1.0);
        let i = SpdPoint::identity(3);
        assert_close(&gyration(&i, &b, &c).unwrap(), &c, 1e-10);
        assert_close(&gyration(&a, &gyro_neg(&a), &c).unwrap(), &c, 1e-10);
        let da = SpdPoint::from_diag(&[2.0, 0.3, 1.1]).unwrap();
        let db = SpdPoint::from_diag(&[0.7, 5.0, 1.9]).unwrap();
        assert_close(&gyration(&da, &db, &c).unwrap(), &c, 1e-10);
    }

    #[test]
    fn co_operation() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = sample::spd(&mut rng, 3, 1.0);
        let i = SpdPoint::identity(3);
        assert_close(&gyro_coadd(&a, &i).unwrap(), &a, 1e-10);
        assert_close(&gyro_cosub(&a, &a).unwrap(), &i, 1e-10);
    }

    #[test]
    fn scalar_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = sample::spd(&mut rng, 4, 1.0);
        assert_close(&scalar_mul(1.0, &p).unwrap(), &p, 1e-12);
        assert_close(&scalar_mul(0.0, &p).unwrap(), &SpdPoint::identity(4), 1e-12);
        for _ in 0..10 {
            let r1 = rng.gen_range(-2.0..2.0);
            let r2 = rng.gen_range(-2.0..2.0);
            let lhs = scalar_mul(r1, &scalar_mul(r2, &p).unwrap()).unwrap();
            let rhs = scalar_mul(r1 * r2, &p).unwrap();
            assert_close(&lhs, &rhs, 1e-8);
        }
    }

    #[test]
    fn matrix_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let p = sample::spd(&mut rng, 4, 1.0);
        let ones = SymMat::new(Matrix::filled(4, 1.0)).unwrap();
        assert_close(&matrix_scale(&ones, &p).unwrap(), &p, 1e-10);
        let alpha = 0.37;
        let c = SymMat::new(Matrix::filled(4, alpha)).unwrap();
        assert_close(
            &matrix_scale(&c, &p).unwrap(),
            &scalar_mul(alpha, &p).unwrap(),
            1e-10,
        );
        let a = sample::sym(&mut rng, 4, 2.0);
        assert_close(
            &matrix_scale(&a, &SpdPoint::identity(4)).unwrap(),
            &SpdPoint::identity(4),
            1e-14,
        );
        assert!(matrix_scale(&SymMat::zeros(3), &p).is_err());
    }

    #[test]
    fn cancellation_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let i = SpdPoint::identity(3);
        for _ in 0..10 {
            let a = sample::spd(&mut rng, 3, 1.0);
            let b = sample::spd(&mut rng, 3, 1.0);
            let x = solve_left(&a, &b).unwrap();
            assert_close(&gyro_add(&a, &x).unwrap(), &b, 1e-8);
            let y = solve_right(&a, &b).unwrap();
            assert_close(&gyro_add(&y, &a).unwrap(), &b, 1e-8);
            assert_close(&solve_left(&i, &b).unwrap(), &b, 1e-12);
            assert_close(&solve_left(&a, &a).unwrap(), &i, 1e-9);
            assert_close(&solve_right(&a, &a).unwrap(), &i, 1e-9);
            assert_close(&solve_right(&i, &b).unwrap(), &b, 1e-9);
        }
    }

    #[test]
    fn vvd_through_gyro() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let p = sample::spd(&mut rng, 4, 1.0);
        let q = sample::spd(&mut rng, 4, 1.0);
        let g = gyro_add(&gyro_neg(&p), &q).unwrap();
        let mut logs: Vec<f64> = g.eigen().values.iter().map(|l| l.ln()).collect();
        logs.sort_by(|a, b| b.total_cmp(a));
        let v = vvd(&p, &q).unwrap();
        for (a, b) in logs.iter().zip(v.as_slice()) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}
