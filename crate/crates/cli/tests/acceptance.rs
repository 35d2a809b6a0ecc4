//! Acceptance suite. Runs each criterion in turn, prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdgyro::analysis::{analysis_records, angle, barycenter, Label};
use spdgyro::gyro::{gyration, gyro_add, gyro_neg, solve_left, solve_right};
use spdgyro::kgmodel::{parse_triples, random_model, KgDataset, KgModel, ModelKind, Split, Triple, Vocab};
use spdgyro::linalg::Matrix;
use spdgyro::manifold::{dist, exp_at_identity, log_at_identity, vvd, Metric, SpdPoint};
use spdgyro::pipeline::{evaluate_filtered, queries};
use spdgyro::sample;

const PAIRS: usize = 200;

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

fn spdgyro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdgyro"))
        .args(args)
        .env("SPD_GYRO_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spdgyro runs")
}

fn max_diff(a: &SpdPoint, b: &SpdPoint) -> f64 {
    a.matrix().max_abs_diff(b.matrix())
}

/// Result of one criterion: pass flag and a short measurement.
type Check = (bool, String);

fn exp_log_roundtrip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for n in [2, 5, 14] {
        for _ in 0..PAIRS {
            let u = sample::sym_with_spectrum(&mut rng, n, 3.0);
            let p = exp_at_identity(&u).unwrap();
            // decompose the matrix afresh rather than reuse the spectrum of u
            let fresh = SpdPoint::new(p.sym().clone()).unwrap();
            worst = worst.max(log_at_identity(&fresh).matrix().max_abs_diff(u.matrix()));
        }
    }
    (worst <= 1e-8, format!("max |log(exp U) - U| = {worst:.2e}"))
}

fn isometry_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..PAIRS {
        let n = [2, 3, 5][i % 3];
        let p = sample::spd(&mut rng, n, 2.0);
        let q = sample::spd(&mut rng, n, 2.0);
        let m = sample::gl(&mut rng, n);
        let (mp, mq) = (p.congruence(&m).unwrap(), q.congruence(&m).unwrap());
        for metric in [Metric::Riemannian, Metric::F1, Metric::FInf, Metric::Stein] {
            let d = dist(&p, &q, metric).unwrap();
            let dm = dist(&mp, &mq, metric).unwrap();
            worst = worst.max((d - dm).abs() / d.max(1e-300));
        }
    }
    (worst <= 1e-7, format!("max relative discrepancy {worst:.2e}"))
}

fn vvd_asymmetry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..PAIRS {
        let n = 2 + i % 6;
        let p = sample::spd(&mut rng, n, 2.0);
        let q = sample::spd(&mut rng, n, 2.0);
        let a = vvd(&p, &q).unwrap();
        let b = vvd(&q, &p).unwrap();
        let k = a.as_slice().len();
        for j in 0..k {
            worst = worst.max((a.as_slice()[j] + b.as_slice()[k - 1 - j]).abs());
        }
    }
    (worst <= 1e-8, format!("max deviation {worst:.2e}"))
}

fn gyro_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let names = ["left gyroassociativity", "left loop", "nested gyration", "gyrocommutativity", "left cancellation", "right cancellation"];
    let mut worst = [0.0f64; 6];
    for n in [2, 3, 5] {
        for _ in 0..PAIRS {
            let a = sample::spd(&mut rng, n, 1.0);
            let b = sample::spd(&mut rng, n, 1.0);
            let c = sample::spd(&mut rng, n, 1.0);
            let ab = gyro_add(&a, &b).unwrap();
            let g = |x: &SpdPoint| gyration(&a, &b, x).unwrap();
            let lhs = gyro_add(&a, &gyro_add(&b, &c).unwrap()).unwrap();
            let rhs = gyro_add(&ab, &g(&c)).unwrap();
            let errs = [
                max_diff(&lhs, &rhs),
                max_diff(&g(&c), &gyration(&ab, &b, &c).unwrap()),
                max_diff(&gyration(&a, &gyro_neg(&g(&b)), &g(&c)).unwrap(), &c),
                max_diff(&ab, &g(&gyro_add(&b, &a).unwrap())),
                max_diff(&gyro_add(&a, &solve_left(&a, &b).unwrap()).unwrap(), &b),
                max_diff(&gyro_add(&solve_right(&a, &b).unwrap(), &a).unwrap(), &b),
            ];
            for (w, e) in worst.iter_mut().zip(errs) {
                *w = w.max(e);
            }
        }
    }
    let ok = worst.iter().all(|&w| w <= 1e-8);
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, detail)
}

fn stein_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logdet = |m: &Matrix| m.det().ln();
    let mut worst = 0.0f64;
    for i in 0..PAIRS {
        let n = [2, 3, 5][i % 3];
        let p = sample::spd(&mut rng, n, 2.0);
        let q = sample::spd(&mut rng, n, 2.0);
        let mid = p.matrix().add(q.matrix()).unwrap().scale(0.5);
        let direct = logdet(&mid) - 0.5 * (logdet(p.matrix()) + logdet(q.matrix()));
        let via_vvd = dist(&p, &q, Metric::Stein).unwrap();
        worst = worst.max((direct - via_vvd).abs());
    }
    (worst <= 1e-8, format!("max |VVD Stein - log-det Stein| = {worst:.2e}"))
}

fn gradient_fidelity() -> Check {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for kind in ["scaling", "rotation", "reflection"] {
        for metric in ["riemannian", "f1"] {
            let o = spdgyro(&["check-grad", "--n", "4", "--model", kind, "--metric", metric, "--seeds", "20"]);
            let out = String::from_utf8_lossy(&o.stdout);
            let err: f64 = out
                .split("max relative error ")
                .nth(1)
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse().ok())
                .unwrap_or(f64::INFINITY);
            worst = worst.max(err);
            if o.status.code() != Some(0) {
                failures.push(format!("{kind}/{metric}"));
            }
        }
    }
    let ok = failures.is_empty() && worst <= 1e-4;
    (ok, format!("worst max relative error {worst:.2e} over 6 configurations x 20 seeds {failures:?}"))
}

fn train_toy(out: &Path) -> Output {
    let conf = toy_dir().join("train.conf");
    spdgyro(&[
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--data-dir",
        toy_dir().to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--model",
        "scaling",
        "--n",
        "6",
        "--lr",
        "0.001",
        "-k",
        "5",
        "--epochs",
        "500",
        "--seed",
        "7",
        "--deterministic",
    ])
}

fn toy_overfit(out: &Path) -> Check {
    let o = train_toy(out);
    if o.status.code() != Some(0) {
        return (false, format!("train failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let mut best = (0.0f64, 0usize);
    let mut epochs = 0;
    for line in history.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        epochs = f[0].parse().unwrap();
        if let Ok(mrr) = f[3].parse::<f64>() {
            if mrr > best.0 {
                best = (mrr, epochs);
            }
        }
    }
    (
        best.0 >= 0.95 && epochs <= 500,
        format!("best filtered dev MRR {:.4} at epoch {} of {epochs}", best.0, best.1),
    )
}

fn complexity_slope(dir: &Path) -> Check {
    let out = dir.join("bench_dist.csv");
    let o = spdgyro(&["bench", "--op", "dist", "--sizes", "8,16,32,64", "--out", out.to_str().unwrap()]);
    if o.status.code() != Some(0) {
        return (false, "bench failed".into());
    }
    let csv = std::fs::read_to_string(&out).unwrap();
    let slope: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("# slope,"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN);
    ((2.5..=3.5).contains(&slope), format!("log-log slope {slope:.3}"))
}

fn five_entity_kg() -> KgDataset {
    let mut e = Vocab::new();
    let mut r = Vocab::new();
    let p = Path::new("hand");
    let train = parse_triples("a\tr\tb\na\tr\tc\nb\ts\td\nc\ts\te\nd\tr\te\n", p, &mut e, &mut r).unwrap();
    let valid = parse_triples("a\tr\td\ne\ts\ta\n", p, &mut e, &mut r).unwrap();
    let test = parse_triples("b\tr\tc\nd\ts\tb\nc\tr\tb\n", p, &mut e, &mut r).unwrap();
    KgDataset::new(e, r, train, valid, test).unwrap().augment_inverse()
}

/// Ranks by sorting every candidate, built from the raw triple lists.
fn brute_force_ranks(model: &KgModel, data: &KgDataset, split: Split) -> Vec<f64> {
    let raw = data.raw_relations;
    let mut truth: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
    for t in data.train.iter().chain(&data.valid).chain(&data.test).filter(|t| t.rel < raw) {
        truth.entry((t.head, t.rel)).or_default().insert(t.tail);
        truth.entry((t.tail, t.rel + raw)).or_default().insert(t.head);
    }
    let mut out = Vec::new();
    for t in data.split(split) {
        for q in [*t, Triple::new(t.tail, t.rel + raw, t.head)] {
            let known = &truth[&(q.head, q.rel)];
            let mut pool: Vec<(f64, usize)> = (0..data.num_entities())
                .filter(|&e| e == q.tail || !known.contains(&e))
                .map(|e| (model.score(&Triple::new(q.head, q.rel, e)).unwrap(), e))
                .collect();
            pool.sort_by(|a, b| b.0.total_cmp(&a.0));
            let first = pool.iter().position(|p| p.0 == model.score(&q).unwrap()).unwrap();
            let last = pool.iter().rposition(|p| p.0 == pool[first].0).unwrap();
            out.push((first + 1 + last + 1) as f64 / 2.0);
        }
    }
    out
}

fn evaluation_oracle() -> Check {
    let data = five_entity_kg();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut models = Vec::new();
    for kind in ModelKind::ALL {
        for metric in [Metric::Riemannian, Metric::F1] {
            models.push(random_model(&mut rng, kind, metric, 3, 5, 4, 0.5).unwrap());
        }
    }
    models.push(KgModel::zeros(ModelKind::Rotation, Metric::Riemannian, 2, 5, 4).unwrap());
    let mut tied = random_model(&mut rng, ModelKind::Scaling, Metric::Riemannian, 3, 5, 4, 0.5).unwrap();
    let l = *tied.layout();
    let src = tied.entity_params(2).to_vec();
    tied.params_mut()[l.entity(4)..l.entity(4) + l.tri].copy_from_slice(&src);
    let b = tied.bias(2);
    tied.params_mut()[l.bias(4)] = b;
    models.push(tied);
    let mut compared = 0;
    let mut ties = 0;
    for m in &models {
        for split in [Split::Valid, Split::Test] {
            let report = evaluate_filtered(m, &data, split, false).unwrap();
            let got: Vec<f64> = report.ranks.iter().map(|r| r.1).collect();
            let want = brute_force_ranks(m, &data, split);
            if got != want || report.ranks.iter().map(|r| r.0).collect::<Vec<_>>() != queries(&data, split) {
                return (false, format!("ranks {got:?} vs brute force {want:?}"));
            }
            let mrr = want.iter().map(|r| 1.0 / r).sum::<f64>() / want.len() as f64;
            let h = |k: f64| want.iter().filter(|&&r| r <= k).count() as f64 / want.len() as f64;
            let o = &report.overall;
            if (o.mrr - mrr).abs() > 1e-15 || o.hits1 != h(1.0) || o.hits3 != h(3.0) || o.hits10 != h(10.0) {
                return (false, "aggregate metrics differ".into());
            }
            compared += want.len();
            ties += want.iter().filter(|r| r.fract() != 0.0).count();
        }
    }
    (true, format!("{compared} ranks identical, {ties} of them mean-tie ranks"))
}

fn determinism(first: &Path, dir: &Path) -> Check {
    let second = dir.join("second");
    let o = train_toy(&second);
    if o.status.code() != Some(0) {
        return (false, "second run failed".into());
    }
    let mut differ = Vec::new();
    for f in ["history.csv", "best.ckpt", "last.ckpt"] {
        if std::fs::read(first.join(f)).ok() != std::fs::read(second.join(f)).ok() {
            differ.push(f);
        }
    }
    (differ.is_empty(), format!("history.csv, best.ckpt, last.ckpt compared; differing: {differ:?}"))
}

fn analysis_export(first: &Path) -> Check {
    let mut notes = Vec::new();
    let bary_ok = barycenter(3) == vec![2.0, 0.0, -2.0];
    notes.push(format!("barycenter(3) = {:?}", barycenter(3)));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut scale_err = 0.0f64;
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=14);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b = barycenter(n);
        let c = rng.gen_range(1e-3..1e3);
        let cv: Vec<f64> = v.iter().map(|x| c * x).collect();
        scale_err = scale_err.max((angle(&cv, &b) - angle(&v, &b)).abs());
        v.sort_by(|x, y| y.total_cmp(x));
        let dot = |x: &[f64]| x.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>();
        let mut w = v.clone();
        w.shuffle(&mut rng);
        if dot(&w) > dot(&v) + 1e-12 {
            violations += 1;
        }
    }
    notes.push(format!("scaling drift {scale_err:.1e}, rearrangement violations {violations}"));

    let data = KgDataset::load(&toy_dir()).unwrap().augment_inverse();
    let ckpt = first.join("best.ckpt");
    let csv = first.join("analysis.csv");
    let o = spdgyro(&[
        "analyze",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-dir",
        toy_dir().to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    let rows = std::fs::read_to_string(&csv).map(|t| t.lines().count() - 1).unwrap_or(0);
    let train = data.train.iter().filter(|t| t.rel < data.raw_relations).count();
    let expect = train + data.valid.len() + train + data.raw_relations;
    let state = spdgyro::pipeline::TrainState::load(&ckpt).unwrap();
    let recs = analysis_records(&state.model, &data, 1, 0).unwrap();
    let negs = recs.iter().filter(|r| r.label == Label::Negative).count();
    let count_ok = o.status.code() == Some(0) && rows == expect && negs == train;
    notes.push(format!(
        "{rows} rows = {train} train + {} valid + {negs} negatives + {} relation markers",
        data.valid.len(),
        data.raw_relations
    ));
    (bary_ok && scale_err <= 1e-10 && violations == 0 && count_ok, notes.join("; "))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let limits: [Option<Duration>; 11] = [
        Some(Duration::from_secs(10)),
        Some(Duration::from_secs(20)),
        None,
        Some(Duration::from_secs(30)),
        None,
        Some(Duration::from_secs(60)),
        Some(Duration::from_secs(300)),
        None,
        None,
        None,
        None,
    ];
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("exp/log roundtrip", Box::new(exp_log_roundtrip)),
        ("isometry invariance", Box::new(isometry_invariance)),
        ("VVD asymmetry", Box::new(vvd_asymmetry)),
        ("gyrogroup laws", Box::new(gyro_laws)),
        ("Stein consistency", Box::new(stein_consistency)),
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("toy KG overfit", Box::new(|| toy_overfit(&first))),
        ("complexity slope", Box::new(|| complexity_slope(dir.path()))),
        ("evaluation oracle", Box::new(evaluation_oracle)),
        ("determinism", Box::new(|| determinism(&first, dir.path()))),
        ("analysis export", Box::new(|| analysis_export(&first))),
    ];
    let mut failed = 0;
    for (i, ((name, f), limit)) in criteria.iter().zip(limits).enumerate() {
        let start = Instant::now();
        let (ok, detail) = f();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took < l);
        let ok = ok && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
        println!(
            "criterion {:>2} {:<20} {}  {detail}; {:.2}s{budget}",
            i + 1,
            name,
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        if !ok {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
