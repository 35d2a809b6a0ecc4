//! Knowledge-graph completion on SPD embeddings.

mod data;
mod model;

pub use data::{load_triples, parse_triples, KgDataset, Split, Triple, Vocab, INVERSE_SUFFIX};
pub use model::{negative_samples, KgModel, Layout, ModelKind, Query, Scorer, SparseGrad, INIT_STD};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::GradCheck;
use crate::error::Result;
use crate::manifold::Metric;

/// Finite-difference step used by [`check_score_gradient`].
pub const CHECK_STEP: f64 = 1e-5;

/// A small random model whose parameters are `N(0, std²)` (angles uniform),
/// with biases drawn the same way.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    kind: ModelKind,
    metric: Metric,
    n: usize,
    entities: usize,
    relations: usize,
    std: f64,
) -> Result<KgModel> {
    let mut m = KgModel::init(rng, kind, metric, n, entities, relations)?;
    let normal = Normal::new(0.0, std).expect("valid std");
    let l = *m.layout();
    let [ent, add, tr, bias] = l.block_lens();
    let p = m.params_mut();
    for x in &mut p[..ent + add] {
        *x = normal.sample(rng);
    }
    if kind == ModelKind::Scaling {
        for x in &mut p[ent + add..ent + add + tr] {
            *x = normal.sample(rng);
        }
    }
    for x in &mut p[ent + add + tr..ent + add + tr + bias] {
        *x = normal.sample(rng);
    }
    Ok(m)
}

/// Gradient check of the full score of one random triple on a random
/// model of size `n` (parameters of scale 0.5), seeded.
///
/// For F1 the instance is redrawn until the VVD of the scored pair has
/// components of both signs, each at least `1e-3` from zero. With a single
/// sign the F1 distance is a log-determinant and some partial derivatives
/// vanish exactly, which central differences only resolve to roundoff.
pub fn check_score_gradient(kind: ModelKind, metric: Metric, n: usize, seed: u64, corrupt: bool) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempt = 0;
    loop {
        let model = random_model(&mut rng, kind, metric, n, 4, 2, 0.5)?;
        let t = Triple::new(rng.gen_range(0..4), rng.gen_range(0..2), rng.gen_range(0..4));
        attempt += 1;
        if metric == Metric::F1 && n > 1 && attempt < 1000 {
            let x = crate::gyro::gyro_add(&model.transform_head(t.head, t.rel)?, &model.embed_rel_add(t.rel)?)?;
            let v = crate::manifold::vvd(&x, &model.embed_entity(t.tail)?)?;
            let v = v.as_slice();
            let mixed = v[0] > 0.0 && v[v.len() - 1] < 0.0;
            if !mixed || v.iter().any(|c| c.abs() < 1e-3) {
                continue;
            }
        }
        return model.score_grad_check(&t, CHECK_STEP, corrupt);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::softplus;
    use crate::gyro::{gyro_add, matrix_scale};
    use crate::isometry::apply;
    use crate::manifold::{dist, SpdPoint};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    /// Straight-line score through the gyro and isometry operations.
    fn oracle_score(m: &KgModel, t: &Triple) -> f64 {
        let h = m.embed_entity(t.head).unwrap();
        let s = match m.kind() {
            ModelKind::Scaling => matrix_scale(&m.scaling_matrix(t.rel).unwrap(), &h).unwrap(),
            _ => apply(&m.isometry(t.rel).unwrap(), &h).unwrap(),
        };
        let x = gyro_add(&s, &m.embed_rel_add(t.rel).unwrap()).unwrap();
        let d = dist(&x, &m.embed_entity(t.tail).unwrap(), m.metric()).unwrap();
        -d * d + m.bias(t.head) + m.bias(t.tail)
    }

    fn ones_scaling(m: &mut KgModel, r: usize) {
        let n = m.n();
        let o = m.layout().transform(r);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                m.params_mut()[o + k] = if i == j { 0.5 } else { 1.0 };
                k += 1;
            }
        }
    }

    #[test]
    fn identity_configurations_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = KgModel::init(&mut rng, ModelKind::Scaling, Metric::Riemannian, 3, 2, 1).unwrap();
        ones_scaling(&mut m, 0);
        let o = m.layout().rel_add(0);
        m.params_mut()[o..o + 6].fill(0.0);
        assert!(m.score(&Triple::new(1, 0, 1)).unwrap().abs() < 1e-12);
        assert!(m.scaling_matrix(0).unwrap().matrix().max_abs_diff(&crate::linalg::Matrix::filled(3, 1.0)) == 0.0);
        // degenerate configuration is symmetric in head and tail
        let a = m.score(&Triple::new(0, 0, 1)).unwrap();
        let b = m.score(&Triple::new(1, 0, 0)).unwrap();
        assert!((a - b).abs() < 1e-10);
        let want = dist(&m.embed_entity(0).unwrap(), &m.embed_entity(1).unwrap(), Metric::Riemannian).unwrap();
        assert!((a + want * want).abs() < 1e-10);

        let mut m = KgModel::zeros(ModelKind::Rotation, Metric::F1, 3, 2, 1).unwrap();
        let o = m.layout().entity(0);
        m.params_mut()[o..o + 6].copy_from_slice(&[0.3, -0.1, 0.2, 0.05, 0.4, -0.2]);
        assert!(m.score(&Triple::new(0, 0, 0)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn plain_tape_and_oracle_scores_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in ModelKind::ALL {
            for metric in [Metric::Riemannian, Metric::F1] {
                for n in [1, 2, 4] {
                    let m = random_model(&mut rng, kind, metric, n, 5, 3, 0.4).unwrap();
                    let scorer = Scorer::new(&m).unwrap();
                    for _ in 0..5 {
                        let t = Triple::new(rng.gen_range(0..5), rng.gen_range(0..3), rng.gen_range(0..5));
                        let want = oracle_score(&m, &t);
                        let plain = m.score(&t).unwrap();
                        let cached = scorer.score(&t).unwrap();
                        let taped = m.tape_score(&t).unwrap();
                        let all = scorer.score_all_tails(t.head, t.rel).unwrap()[t.tail];
                        for got in [plain, cached, taped, all] {
                            assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{kind} {metric} n={n}: {got} vs {want}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn isometric_transform_keeps_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in [ModelKind::Rotation, ModelKind::Reflection] {
            let m = random_model(&mut rng, kind, Metric::Riemannian, 5, 3, 2, 0.5).unwrap();
            for h in 0..3 {
                for r in 0..2 {
                    let a = m.embed_entity(h).unwrap().eigen().values.clone();
                    let b = m.transform_head(h, r).unwrap().eigen().values.clone();
                    for (x, y) in a.iter().zip(&b) {
                        assert!((x - y).abs() <= 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn loss_values() {
        let m = KgModel::zeros(ModelKind::Scaling, Metric::Riemannian, 3, 4, 2).unwrap();
        let pos = [Triple::new(0, 1, 2)];
        let neg = [Triple::new(0, 1, 3), Triple::new(0, 1, 0)];
        let l = m.loss(&pos, &neg).unwrap();
        assert!((l - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let (lg, _) = m.loss_and_grad(&pos, &neg, 2, false).unwrap();
        assert!((lg - l).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, ModelKind::Rotation, Metric::F1, 3, 4, 2, 0.3).unwrap();
        let l = m.loss(&pos, &neg).unwrap();
        let direct: f64 = (1.0 + m.score(&pos[0]).unwrap().exp()).recip().recip().ln()
            - m.score(&pos[0]).unwrap()
            + neg.iter().map(|t| (1.0 + m.score(t).unwrap().exp()).ln()).sum::<f64>();
        assert!((l - direct).abs() < 1e-12, "{l} vs {direct}");
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }

    #[test]
    fn gradient_step_lowers_loss() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let kind = ModelKind::ALL[seed as usize % 3];
            let mut m = random_model(&mut rng, kind, Metric::Riemannian, 3, 6, 2, 0.3).unwrap();
            let pos = [Triple::new(0, 1, 2)];
            let neg = negative_samples(&mut rng, &pos, 4, 6);
            let (before, g) = m.loss_and_grad(&pos, &neg, 4, false).unwrap();
            for (p, gi) in m.params_mut().iter_mut().zip(&g) {
                *p -= 1e-3 * gi;
            }
            let after = m.loss(&pos, &neg).unwrap();
            assert!(after < before, "seed {seed}: {after} >= {before}");
        }
    }

    #[test]
    fn score_gradients_pass_check() {
        for kind in ModelKind::ALL {
            for metric in [Metric::Riemannian, Metric::F1] {
                for seed in 0..20 {
                    let r = check_score_gradient(kind, metric, 4, seed, false).unwrap();
                    assert!(r.max_rel_error <= 1e-4, "{kind} {metric} seed {seed}: {:e}", r.max_rel_error);
                }
            }
        }
        let r = check_score_gradient(ModelKind::Rotation, Metric::Riemannian, 4, 0, true).unwrap();
        assert!(r.max_rel_error > 1e-4);
    }

    #[test]
    fn parallel_reduction_is_bitwise_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, ModelKind::Scaling, Metric::F1, 3, 8, 2, 0.3).unwrap();
        let pos: Vec<Triple> = (0..6).map(|i| Triple::new(i, i % 2, (i + 3) % 8)).collect();
        let neg = negative_samples(&mut rng, &pos, 3, 8);
        let (a, ga) = m.loss_and_grad(&pos, &neg, 3, false).unwrap();
        let (b, gb) = m.loss_and_grad(&pos, &neg, 3, true).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(m.loss_and_grad(&pos, &neg[1..], 3, false).is_err());
    }

    #[test]
    fn negatives_are_uniform_tail_corruptions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(negative_samples(&mut rng, &[Triple::new(0, 0, 1)], 0, 20).is_empty());
        let e = 20;
        let batch: Vec<Triple> = (0..10_000).map(|i| Triple::new(i % e, 0, 0)).collect();
        let negs = negative_samples(&mut rng, &batch, 10, e);
        assert_eq!(negs.len(), 100_000);
        let mut counts = vec![0usize; e];
        for (i, t) in negs.iter().enumerate() {
            assert_eq!((t.head, t.rel), (batch[i / 10].head, 0));
            counts[t.tail] += 1;
        }
        let expected = negs.len() as f64 / e as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((e - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 1e-3, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn embeddings_roundtrip() {
        let m = KgModel::zeros(ModelKind::Scaling, Metric::Riemannian, 3, 2, 1).unwrap();
        let i = SpdPoint::identity(3);
        assert_eq!(m.embed_entity(0).unwrap().matrix(), i.matrix());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&mut rng, ModelKind::Scaling, Metric::Riemannian, 4, 2, 1, 0.5).unwrap();
        let u = crate::linalg::sym_from_triangular(m.entity_params(1)).unwrap();
        let back = crate::manifold::log_at_identity(&m.embed_entity(1).unwrap());
        assert!(back.matrix().max_abs_diff(u.matrix()) < 1e-10);
        assert!(KgModel::zeros(ModelKind::Scaling, Metric::FInf, 3, 1, 1).is_err());
        assert!(m.score(&Triple::new(5, 0, 0)).is_err());
    }
}
