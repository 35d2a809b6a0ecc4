//! Browser demo: distances and gyro-addition of two SPD matrices.
//!
//! Matrices cross the boundary as flat row-major `Float64Array`s; results
//! come back as JSON strings. The `*_json` functions hold the logic and run
//! natively; the exported wrappers only convert errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spdgyro::analysis::{angle, barycenter};
use spdgyro::gyro::{gyration, gyro_add, solve_left};
use spdgyro::linalg::SymMat;
use spdgyro::manifold::{dist, vvd, Metric, SpdPoint};
use spdgyro::sample;
use wasm_bindgen::prelude::*;

pub const MAX_N: usize = 8;

#[derive(Serialize)]
pub struct Pair {
    pub n: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Serialize)]
pub struct Distances {
    pub vvd: Vec<f64>,
    pub riemannian: f64,
    pub f1: f64,
    pub f_inf: f64,
    pub stein: f64,
    pub vvd_norm: f64,
    /// Radians.
    pub vvd_angle: f64,
}

#[derive(Serialize)]
pub struct GyroSum {
    /// `P ⊕ Q`.
    pub sum: Vec<f64>,
    /// `gyr[P, Q] (Q ⊕ P)`, equal to `sum` by gyrocommutativity.
    pub gyrated_swap: Vec<f64>,
    /// `X` with `P ⊕ X = Q`.
    pub solve_left: Vec<f64>,
    /// `max |P ⊕ Q − gyr[P, Q](Q ⊕ P)|`.
    pub commutation_residual: f64,
}

fn point(n: usize, flat: &[f64], name: &str) -> Result<SpdPoint, String> {
    if n == 0 || n > MAX_N {
        return Err(format!("n must be between 1 and {MAX_N}"));
    }
    if flat.len() != n * n {
        return Err(format!("{name} needs {} entries, got {}", n * n, flat.len()));
    }
    let s = SymMat::from_vec(n, flat.to_vec()).map_err(|e| format!("{name}: {e}"))?;
    SpdPoint::new(s).map_err(|e| format!("{name}: {e}"))
}

fn flat(p: &SpdPoint) -> Vec<f64> {
    p.matrix().as_slice().to_vec()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// Two random SPD matrices with log-spectra in `[-radius, radius]`.
pub fn random_pair_json(n: usize, seed: u64, radius: f64) -> Result<String, String> {
    if n == 0 || n > MAX_N {
        return Err(format!("n must be between 1 and {MAX_N}"));
    }
    if !(radius.is_finite() && radius >= 0.0) {
        return Err("radius must be a nonnegative number".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sample::spd(&mut rng, n, radius);
    let q = sample::spd(&mut rng, n, radius);
    Ok(json(&Pair {
        n,
        p: flat(&p),
        q: flat(&q),
    }))
}

pub fn distances_json(n: usize, p: &[f64], q: &[f64]) -> Result<String, String> {
    let (p, q) = (point(n, p, "P")?, point(n, q, "Q")?);
    let v = vvd(&p, &q).map_err(|e| e.to_string())?;
    let d = |m| dist(&p, &q, m).map_err(|e| e.to_string());
    Ok(json(&Distances {
        riemannian: d(Metric::Riemannian)?,
        f1: d(Metric::F1)?,
        f_inf: d(Metric::FInf)?,
        stein: d(Metric::Stein)?,
        vvd_norm: v.l2(),
        vvd_angle: angle(v.as_slice(), &barycenter(n)),
        vvd: v.into_vec(),
    }))
}

pub fn gyro_sum_json(n: usize, p: &[f64], q: &[f64]) -> Result<String, String> {
    let (p, q) = (point(n, p, "P")?, point(n, q, "Q")?);
    let e = |e: spdgyro::Error| e.to_string();
    let sum = gyro_add(&p, &q).map_err(e)?;
    let swapped = gyration(&p, &q, &gyro_add(&q, &p).map_err(e)?).map_err(e)?;
    let x = solve_left(&p, &q).map_err(e)?;
    Ok(json(&GyroSum {
        commutation_residual: sum.matrix().max_abs_diff(swapped.matrix()),
        sum: flat(&sum),
        gyrated_swap: flat(&swapped),
        solve_left: flat(&x),
    }))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|m| JsError::new(&m))
}

#[wasm_bindgen(js_name = randomPair)]
pub fn random_pair(n: usize, seed: u32, radius: f64) -> Result<String, JsError> {
    js(random_pair_json(n, seed as u64, radius))
}

#[wasm_bindgen]
pub fn distances(n: usize, p: &[f64], q: &[f64]) -> Result<String, JsError> {
    js(distances_json(n, p, q))
}

#[wasm_bindgen(js_name = gyroSum)]
pub fn gyro_sum(n: usize, p: &[f64], q: &[f64]) -> Result<String, JsError> {
    js(gyro_sum_json(n, p, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(distances_json(2, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]).is_err());
        assert!(distances_json(0, &[], &[]).is_err());
        assert!(random_pair_json(MAX_N + 1, 0, 1.0).is_err());
        let err = gyro_sum_json(2, &[1.0, 0.0, 0.0, -1.0], &[1.0, 0.0, 0.0, 1.0]).unwrap_err();
        assert!(err.starts_with("P:"), "{err}");
    }
}
