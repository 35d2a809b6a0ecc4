//! Micro-benchmarks of the core operations and log-log slope fits.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gyro::{gyro_add, matrix_scale};
use crate::manifold::{dist, exp_at_identity, log_at_identity, Metric};
use crate::sample;

/// Minimum wall time of one timed repetition; short operations are looped.
pub const MIN_REP_TIME: Duration = Duration::from_millis(20);

pub const DEFAULT_SIZES: [usize; 4] = [8, 16, 32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    Dist,
    GyroAdd,
    Exp,
    Log,
    MatrixScale,
}

impl BenchOp {
    pub const ALL: [BenchOp; 5] = [BenchOp::Dist, BenchOp::GyroAdd, BenchOp::Exp, BenchOp::Log, BenchOp::MatrixScale];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Dist => "dist",
            BenchOp::GyroAdd => "gyro_add",
            BenchOp::Exp => "exp",
            BenchOp::Log => "log",
            BenchOp::MatrixScale => "matrix_scale",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchOp::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown benchmark op `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub op: BenchOp,
    pub n: usize,
    pub reps: usize,
    /// Median seconds per call.
    pub median_secs: f64,
}

/// Seconds per call of `f`, looping until `MIN_REP_TIME` has passed.
fn time_per_call(mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    let mut calls = 0u64;
    while calls == 0 || start.elapsed() < MIN_REP_TIME {
        f();
        calls += 1;
    }
    start.elapsed().as_secs_f64() / calls as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Median time per call of `op` at size `n` over `reps` repetitions, on
/// random inputs with spectra in `[-1, 1]`.
pub fn time_op(op: BenchOp, n: usize, reps: usize, seed: u64) -> Result<BenchRow> {
    if reps == 0 || n == 0 {
        return Err(Error::Invalid("reps and sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);
    let p = sample::spd(&mut rng, n, 1.0);
    let q = sample::spd(&mut rng, n, 1.0);
    let u = sample::sym_with_spectrum(&mut rng, n, 1.0);
    let a = sample::sym(&mut rng, n, 1.0);
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = match op {
            BenchOp::Dist => time_per_call(|| {
                std::hint::black_box(dist(&p, &q, Metric::Riemannian).expect("dist"));
            }),
            BenchOp::GyroAdd => time_per_call(|| {
                std::hint::black_box(gyro_add(&p, &q).expect("gyro_add"));
            }),
            BenchOp::Exp => time_per_call(|| {
                std::hint::black_box(exp_at_identity(&u).expect("exp"));
            }),
            BenchOp::Log => time_per_call(|| {
                std::hint::black_box(log_at_identity(&p));
            }),
            BenchOp::MatrixScale => time_per_call(|| {
                std::hint::black_box(matrix_scale(&a, &p).expect("matrix_scale"));
            }),
        };
        times.push(t);
    }
    Ok(BenchRow {
        op,
        n,
        reps,
        median_secs: median(times),
    })
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn loglog_slope(rows: &[BenchRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_secs.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Times `op` at each size.
pub fn run(op: BenchOp, sizes: &[usize], reps: usize, seed: u64) -> Result<(Vec<BenchRow>, Option<f64>)> {
    let rows = sizes
        .iter()
        .map(|&n| time_op(op, n, reps, seed))
        .collect::<Result<Vec<_>>>()?;
    let slope = loglog_slope(&rows);
    Ok((rows, slope))
}

/// CSV with one row per size and a trailing `# slope` comment line.
pub fn to_csv(rows: &[BenchRow], slope: Option<f64>) -> String {
    let mut s = String::from("op,n,reps,median_seconds\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:e}\n", r.op, r.n, r.reps, r.median_secs));
    }
    if let Some(k) = slope {
        s.push_str(&format!("# slope,{k}\n"));
    }
    s
}
