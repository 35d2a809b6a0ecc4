//! Geometry of the manifold of symmetric positive definite matrices.
//!
//! The crate covers the vector-valued distance (VVD) and the Riemannian,
//! Finsler and Stein metrics read off from it, a gyrovector-space structure
//! (gyro-addition, gyration, scalar multiplication, matrix scaling), planar
//! rotation/reflection parametrizations, and a knowledge-graph embedding
//! trainer whose scoring functions live on SPD matrices.
//!
//! ```
//! use spdgyro::manifold::{dist, Metric, SpdPoint};
//!
//! let e = std::f64::consts::E;
//! let p = SpdPoint::identity(2);
//! let q = SpdPoint::from_diag(&[e.powi(3), e.powi(4)]).unwrap();
//! assert!((dist(&p, &q, Metric::Riemannian).unwrap() - 5.0).abs() < 1e-12);
//! assert!((dist(&p, &q, Metric::F1).unwrap() - 7.0).abs() < 1e-12);
//! ```

pub mod analysis;
pub mod autodiff;
pub mod bench;
pub mod error;
pub mod gyro;
pub mod isometry;
pub mod kgmodel;
pub mod linalg;
pub mod manifold;
pub mod pipeline;
pub mod sample;

pub use error::{Error, Result};
