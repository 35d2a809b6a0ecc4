//! SPD knowledge-graph embeddings: parameters, scoring and loss.
//!
//! Every entity `e` has a tangent vector `U_e` (lower triangle) with point
//! `E = exp(U_e)`, and a bias `b_e`. Every relation `r` has an additive
//! point `R = exp(U_r)` and a transform `M_r`: a symmetric scaling matrix or
//! an angle vector for a rotation/reflection. The score of `(h, r, t)` is
//! `−d(M_r(H) ⊕ R, T)² + b_h + b_t`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::data::Triple;
use crate::autodiff::{softplus, Tape, Var};
use crate::error::{Error, Result};
use crate::isometry::{build_reflection, build_rotation, pair_count, pairs, AngleVector, IsometryMatrix, Sign};
use crate::linalg::{eig_sym, matfun, sym_from_triangular, tri_len, MatFn, Matrix, SymMat};
use crate::manifold::{congruence, exp_at_identity, Metric, SpdPoint, VvdVector};

/// Standard deviation of the initial tangent parameters.
pub const INIT_STD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Scaling,
    Rotation,
    Reflection,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Scaling, ModelKind::Rotation, ModelKind::Reflection];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Scaling => "scaling",
            ModelKind::Rotation => "rotation",
            ModelKind::Reflection => "reflection",
        }
    }

    /// Length of one relation's transform parameters.
    pub fn transform_len(self, n: usize) -> usize {
        match self {
            ModelKind::Scaling => tri_len(n),
            ModelKind::Rotation | ModelKind::Reflection => pair_count(n),
        }
    }

    fn sign(self) -> Sign {
        match self {
            ModelKind::Reflection => Sign::Minus,
            _ => Sign::Plus,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaling" => Ok(ModelKind::Scaling),
            "rotation" => Ok(ModelKind::Rotation),
            "reflection" => Ok(ModelKind::Reflection),
            _ => Err(Error::Invalid(format!(
                "unknown model `{s}` (expected scaling, rotation or reflection)"
            ))),
        }
    }
}

/// Offsets of the parameter blocks inside the flat vector:
/// entities, relation additions, relation transforms, biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub entities: usize,
    pub relations: usize,
    pub tri: usize,
    pub tlen: usize,
}

impl Layout {
    pub fn new(kind: ModelKind, n: usize, entities: usize, relations: usize) -> Self {
        Layout {
            n,
            entities,
            relations,
            tri: tri_len(n),
            tlen: kind.transform_len(n),
        }
    }

    pub fn entity(&self, e: usize) -> usize {
        e * self.tri
    }

    pub fn rel_add(&self, r: usize) -> usize {
        self.entities * self.tri + r * self.tri
    }

    pub fn transform(&self, r: usize) -> usize {
        (self.entities + self.relations) * self.tri + r * self.tlen
    }

    pub fn bias(&self, e: usize) -> usize {
        (self.entities + self.relations) * self.tri + self.relations * self.tlen + e
    }

    pub fn total(&self) -> usize {
        self.bias(self.entities)
    }

    /// Sizes of the four blocks, in layout order.
    pub fn block_lens(&self) -> [usize; 4] {
        [
            self.entities * self.tri,
            self.relations * self.tri,
            self.relations * self.tlen,
            self.entities,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KgModel {
    kind: ModelKind,
    metric: Metric,
    layout: Layout,
    params: Vec<f64>,
}

impl KgModel {
    /// All parameters zero: every embedding is `I`, every scaling matrix is
    /// zero, every angle is zero.
    pub fn zeros(kind: ModelKind, metric: Metric, n: usize, entities: usize, relations: usize) -> Result<Self> {
        if !matches!(metric, Metric::Riemannian | Metric::F1) {
            return Err(Error::Invalid(format!(
                "model metric must be riemannian or f1, got {metric}"
            )));
        }
        if n == 0 {
            return Err(Error::Invalid("matrix size n must be positive".into()));
        }
        let layout = Layout::new(kind, n, entities, relations);
        Ok(KgModel {
            kind,
            metric,
            layout,
            params: vec![0.0; layout.total()],
        })
    }

    /// Tangent parameters from `N(0, INIT_STD²)`, angles from `U(−π, π)`,
    /// biases zero.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        kind: ModelKind,
        metric: Metric,
        n: usize,
        entities: usize,
        relations: usize,
    ) -> Result<Self> {
        let mut m = Self::zeros(kind, metric, n, entities, relations)?;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let l = m.layout;
        let [ent, add, tr, _] = l.block_lens();
        for x in &mut m.params[..ent + add] {
            *x = normal.sample(rng);
        }
        let t0 = l.transform(0);
        for x in &mut m.params[t0..t0 + tr] {
            *x = match kind {
                ModelKind::Scaling => normal.sample(rng),
                _ => rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            };
        }
        Ok(m)
    }

    pub fn from_params(kind: ModelKind, metric: Metric, n: usize, entities: usize, relations: usize, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(kind, metric, n, entities, relations)?;
        if params.len() != m.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        m.params = params;
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_entities(&self) -> usize {
        self.layout.entities
    }

    pub fn num_relations(&self) -> usize {
        self.layout.relations
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn entity_params(&self, e: usize) -> &[f64] {
        let o = self.layout.entity(e);
        &self.params[o..o + self.layout.tri]
    }

    pub fn rel_add_params(&self, r: usize) -> &[f64] {
        let o = self.layout.rel_add(r);
        &self.params[o..o + self.layout.tri]
    }

    pub fn transform_params(&self, r: usize) -> &[f64] {
        let o = self.layout.transform(r);
        &self.params[o..o + self.layout.tlen]
    }

    pub fn bias(&self, e: usize) -> f64 {
        self.params[self.layout.bias(e)]
    }

    fn check_triple(&self, t: &Triple) -> Result<()> {
        let l = &self.layout;
        if t.head >= l.entities || t.tail >= l.entities || t.rel >= l.relations {
            return Err(Error::Invalid(format!(
                "triple ({}, {}, {}) outside a model of {} entities and {} relations",
                t.head, t.rel, t.tail, l.entities, l.relations
            )));
        }
        Ok(())
    }

    pub fn embed_entity(&self, e: usize) -> Result<SpdPoint> {
        exp_at_identity(&sym_from_triangular(self.entity_params(e))?)
    }

    pub fn embed_rel_add(&self, r: usize) -> Result<SpdPoint> {
        exp_at_identity(&sym_from_triangular(self.rel_add_params(r))?)
    }

    /// Scaling matrix `A_r` (scaling models only).
    pub fn scaling_matrix(&self, r: usize) -> Result<SymMat> {
        if self.kind != ModelKind::Scaling {
            return Err(Error::Invalid(format!("{} model has no scaling matrix", self.kind)));
        }
        sym_from_triangular(self.transform_params(r))
    }

    /// Isometry `M_r` (rotation and reflection models only).
    pub fn isometry(&self, r: usize) -> Result<IsometryMatrix> {
        let theta = AngleVector::new(self.transform_params(r).to_vec())?;
        match self.kind {
            ModelKind::Rotation => Ok(build_rotation(&theta)),
            ModelKind::Reflection => Ok(build_reflection(&theta)),
            ModelKind::Scaling => Err(Error::Invalid("scaling model has no isometry".into())),
        }
    }

    /// `M_r(H)`: matrix scaling or isometry action on the head embedding.
    pub fn transform_head(&self, h: usize, r: usize) -> Result<SpdPoint> {
        let u = sym_from_triangular(self.entity_params(h))?;
        match self.kind {
            ModelKind::Scaling => exp_at_identity(&self.scaling_matrix(r)?.hadamard(&u)?),
            _ => {
                let hp = exp_at_identity(&u)?;
                SpdPoint::new(congruence(self.isometry(r)?.matrix(), hp.matrix()))
            }
        }
    }

    /// Score without a tape.
    pub fn score(&self, t: &Triple) -> Result<f64> {
        self.check_triple(t)?;
        let q = Query::new(self, t.head, t.rel).map_err(|e| score_err(t, e))?;
        let inv_sqrt = entity_inv_sqrt(self.entity_params(t.tail)).map_err(|e| score_err(t, e))?;
        q.score(self, t.tail, &inv_sqrt).map_err(|e| score_err(t, e))
    }

    /// `Σ softplus(−φ)` over positives plus `Σ softplus(φ)` over negatives.
    pub fn loss(&self, positives: &[Triple], negatives: &[Triple]) -> Result<f64> {
        let mut l = 0.0;
        for t in positives {
            l += softplus(-self.score(t)?);
        }
        for t in negatives {
            l += softplus(self.score(t)?);
        }
        Ok(l)
    }
}

fn score_err(t: &Triple, e: Error) -> Error {
    match e {
        Error::Score { .. } => e,
        e => Error::Score {
            head: t.head,
            rel: t.rel,
            tail: t.tail,
            source: Box::new(e),
        },
    }
}

/// `exp(−U/2)` for an entity's tangent vector.
fn entity_inv_sqrt(u: &[f64]) -> Result<Matrix> {
    Ok(matfun(&sym_from_triangular(u)?.scale(-0.5), MatFn::Exp)?.into_matrix())
}

/// `X = √S R √S` with `S = M_r(H)`, ready to be compared against tails.
#[derive(Clone, Debug)]
pub struct Query {
    x: Matrix,
    head_bias: f64,
}

impl Query {
    pub fn new(model: &KgModel, h: usize, r: usize) -> Result<Self> {
        let u = sym_from_triangular(model.entity_params(h))?;
        let sqrt_s = match model.kind {
            ModelKind::Scaling => matfun(&model.scaling_matrix(r)?.hadamard(&u)?.scale(0.5), MatFn::Exp)?.into_matrix(),
            _ => {
                let sh = matfun(&u.scale(0.5), MatFn::Exp)?;
                congruence(model.isometry(r)?.matrix(), sh.matrix()).into_matrix()
            }
        };
        let radd = matfun(&sym_from_triangular(model.rel_add_params(r))?, MatFn::Exp)?;
        let x = congruence(&sqrt_s, radd.matrix()).into_matrix();
        Ok(Query {
            x,
            head_bias: model.bias(h),
        })
    }

    /// `−d(X, T)² + b_h + b_t` given `T^{-1/2}`.
    pub fn score(&self, model: &KgModel, tail: usize, tail_inv_sqrt: &Matrix) -> Result<f64> {
        let y = congruence(tail_inv_sqrt, &self.x);
        let eig = eig_sym(&y)?;
        MatFn::Log.check_domain(&eig.values)?;
        let v = VvdVector::new(eig.values.iter().map(|l| l.ln()).collect())?;
        let d = model.metric.norm(&v);
        Ok(self.head_bias + model.bias(tail) - d * d)
    }
}

/// Plain scorer with every tail's `T^{-1/2}` cached, for ranking.
#[derive(Clone, Debug)]
pub struct Scorer<'a> {
    model: &'a KgModel,
    inv_sqrt: Vec<Matrix>,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a KgModel) -> Result<Self> {
        let inv_sqrt = (0..model.num_entities())
            .into_par_iter()
            .map(|e| entity_inv_sqrt(model.entity_params(e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scorer { model, inv_sqrt })
    }

    pub fn model(&self) -> &KgModel {
        self.model
    }

    pub fn score(&self, t: &Triple) -> Result<f64> {
        self.model.check_triple(t)?;
        let q = Query::new(self.model, t.head, t.rel).map_err(|e| score_err(t, e))?;
        q.score(self.model, t.tail, &self.inv_sqrt[t.tail])
            .map_err(|e| score_err(t, e))
    }

    /// Scores of `(h, r, e)` for every entity `e`.
    pub fn score_all_tails(&self, h: usize, r: usize) -> Result<Vec<f64>> {
        self.model.check_triple(&Triple::new(h, r, 0))?;
        let q = Query::new(self.model, h, r).map_err(|e| score_err(&Triple::new(h, r, 0), e))?;
        (0..self.model.num_entities())
            .map(|e| {
                q.score(self.model, e, &self.inv_sqrt[e])
                    .map_err(|err| score_err(&Triple::new(h, r, e), err))
            })
            .collect()
    }

    /// Scores of `(h, r, e)` for the listed entities.
    pub fn score_tails(&self, h: usize, r: usize, tails: &[usize]) -> Result<Vec<f64>> {
        let q = Query::new(self.model, h, r).map_err(|e| score_err(&Triple::new(h, r, 0), e))?;
        tails
            .iter()
            .map(|&e| {
                q.score(self.model, e, &self.inv_sqrt[e])
                    .map_err(|err| score_err(&Triple::new(h, r, e), err))
            })
            .collect()
    }
}

// ---- tape scoring ----

/// Records `X = √S R √S` from head, relation-addition and transform leaves.
fn record_query(t: &mut Tape, kind: ModelKind, n: usize, uh: Var, ua: Var, tr: Var) -> Result<Var> {
    let u = t.sym_from_tri(uh)?;
    let sqrt_s = match kind {
        ModelKind::Scaling => {
            let a = t.sym_from_tri(tr)?;
            let w = t.hadamard(a, u)?;
            let w = t.scale(w, 0.5)?;
            t.matfun(w, MatFn::Exp)?
        }
        _ => {
            let half = t.scale(u, 0.5)?;
            let sh = t.matfun(half, MatFn::Exp)?;
            let mut m = t.matrix(Matrix::identity(n))?;
            for (k, (i, j)) in pairs(n).enumerate() {
                let g = t.plane(tr, k, kind.sign(), i, j, n)?;
                m = t.matmul(g, m)?;
            }
            let ms = t.matmul(m, sh)?;
            let mt = t.transpose(m)?;
            t.matmul(ms, mt)?
        }
    };
    let ra = t.sym_from_tri(ua)?;
    let r = t.matfun(ra, MatFn::Exp)?;
    let xr = t.matmul(sqrt_s, r)?;
    t.matmul(xr, sqrt_s)
}

/// Records `φ = −d(X, T)² + b_h + b_t`.
fn record_score(t: &mut Tape, metric: Metric, x: Var, ut: Var, bh: Var, bt: Var) -> Result<Var> {
    let u = t.sym_from_tri(ut)?;
    let half = t.scale(u, -0.5)?;
    let ti = t.matfun(half, MatFn::Exp)?;
    let y = t.matmul(ti, x)?;
    let y = t.matmul(y, ti)?;
    let v = t.log_eigvals(y)?;
    let d2 = match metric {
        Metric::F1 => {
            let d = t.abs_sum(v)?;
            t.square(d)?
        }
        _ => t.sum_sq(v)?,
    };
    let b = t.add(bh, bt)?;
    t.sub(b, d2)
}

/// Sparse gradient: `(offset, values)` blocks into the flat parameters.
pub type SparseGrad = Vec<(usize, Vec<f64>)>;

impl KgModel {
    fn leaf_vec(&self, t: &mut Tape, offset: usize, len: usize) -> Result<Var> {
        t.vector(self.params[offset..offset + len].to_vec())
    }

    /// Loss of one positive and the negatives that share its head and
    /// relation, with its sparse gradient.
    pub fn group_loss_grad(&self, pos: &Triple, negs: &[Triple]) -> Result<(f64, SparseGrad)> {
        self.group_loss_grad_on(Tape::new(), pos, negs)
    }

    fn group_loss_grad_on(&self, mut t: Tape, pos: &Triple, negs: &[Triple]) -> Result<(f64, SparseGrad)> {
        self.check_triple(pos)?;
        for q in negs {
            self.check_triple(q)?;
            if q.head != pos.head || q.rel != pos.rel {
                return Err(Error::Invalid(format!(
                    "negative ({}, {}, {}) does not share head and relation with ({}, {}, {})",
                    q.head, q.rel, q.tail, pos.head, pos.rel, pos.tail
                )));
            }
        }
        let l = self.layout;
        let uh = self.leaf_vec(&mut t, l.entity(pos.head), l.tri)?;
        let ua = self.leaf_vec(&mut t, l.rel_add(pos.rel), l.tri)?;
        let tr = self.leaf_vec(&mut t, l.transform(pos.rel), l.tlen)?;
        let bh = t.scalar(self.bias(pos.head))?;
        let x = record_query(&mut t, self.kind, l.n, uh, ua, tr).map_err(|e| score_err(pos, e))?;
        let mut tails = Vec::with_capacity(negs.len() + 1);
        let mut total: Option<Var> = None;
        for (k, q) in std::iter::once(pos).chain(negs).enumerate() {
            let ut = self.leaf_vec(&mut t, l.entity(q.tail), l.tri)?;
            let bt = t.scalar(self.bias(q.tail))?;
            let phi = record_score(&mut t, self.metric, x, ut, bh, bt).map_err(|e| score_err(q, e))?;
            let arg = if k == 0 { t.neg(phi)? } else { phi };
            let term = t.softplus(arg)?;
            total = Some(match total {
                None => term,
                Some(acc) => t.add(acc, term)?,
            });
            tails.push((q.tail, ut, bt));
        }
        let total = total.expect("at least the positive");
        t.backward(total)?;
        let loss = t.value(total).scalar()?;
        let mut g: SparseGrad = Vec::with_capacity(2 * tails.len() + 4);
        g.push((l.entity(pos.head), t.grad(uh)?.as_flat().to_vec()));
        g.push((l.rel_add(pos.rel), t.grad(ua)?.as_flat().to_vec()));
        g.push((l.transform(pos.rel), t.grad(tr)?.as_flat().to_vec()));
        g.push((l.bias(pos.head), vec![t.grad(bh)?.scalar()?]));
        for (e, ut, bt) in tails {
            g.push((l.entity(e), t.grad(ut)?.as_flat().to_vec()));
            g.push((l.bias(e), vec![t.grad(bt)?.scalar()?]));
        }
        Ok((loss, g))
    }

    /// Batch loss and dense gradient. `negatives` holds `k` corruptions per
    /// positive, positive-major. Group gradients are reduced in batch order,
    /// so the result does not depend on `parallel`.
    pub fn loss_and_grad(&self, positives: &[Triple], negatives: &[Triple], k: usize, parallel: bool) -> Result<(f64, Vec<f64>)> {
        if negatives.len() != positives.len() * k {
            return Err(Error::Dimension(format!(
                "{} negatives for {} positives with k = {k}",
                negatives.len(),
                positives.len()
            )));
        }
        let group = |i: usize| self.group_loss_grad(&positives[i], &negatives[i * k..(i + 1) * k]);
        let parts: Vec<(f64, SparseGrad)> = if parallel {
            (0..positives.len()).into_par_iter().map(group).collect::<Result<_>>()?
        } else {
            (0..positives.len()).map(group).collect::<Result<_>>()?
        };
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (o, vals) in g {
                for (dst, v) in grad[o..o + vals.len()].iter_mut().zip(vals) {
                    *dst += v;
                }
            }
        }
        Ok((loss, grad))
    }

    /// Checks the recorded score gradient of `tr` against central
    /// differences over the head, relation and tail parameters.
    pub fn score_grad_check(&self, tr: &Triple, h: f64, corrupt: bool) -> Result<crate::autodiff::GradCheck> {
        self.check_triple(tr)?;
        let l = self.layout;
        let mut p = Vec::new();
        p.extend_from_slice(self.entity_params(tr.head));
        p.extend_from_slice(self.rel_add_params(tr.rel));
        p.extend_from_slice(self.transform_params(tr.rel));
        p.extend_from_slice(self.entity_params(tr.tail));
        p.push(self.bias(tr.head));
        p.push(self.bias(tr.tail));
        let (kind, metric, n, tri, tlen) = (self.kind, self.metric, l.n, l.tri, l.tlen);
        crate::autodiff::grad_check(
            move |t, x| {
                let uh = t.slice(x, 0, tri)?;
                let ua = t.slice(x, tri, tri)?;
                let trv = t.slice(x, 2 * tri, tlen)?;
                let ut = t.slice(x, 2 * tri + tlen, tri)?;
                let bh = t.element(x, 3 * tri + tlen)?;
                let bt = t.element(x, 3 * tri + tlen + 1)?;
                let q = record_query(t, kind, n, uh, ua, trv)?;
                record_score(t, metric, q, ut, bh, bt)
            },
            &p,
            h,
            corrupt,
        )
    }

    /// Scores of a group as recorded on the tape, for cross-checks.
    pub fn tape_score(&self, tr: &Triple) -> Result<f64> {
        self.check_triple(tr)?;
        let l = self.layout;
        let mut t = Tape::new();
        let uh = self.leaf_vec(&mut t, l.entity(tr.head), l.tri)?;
        let ua = self.leaf_vec(&mut t, l.rel_add(tr.rel), l.tri)?;
        let trv = self.leaf_vec(&mut t, l.transform(tr.rel), l.tlen)?;
        let ut = self.leaf_vec(&mut t, l.entity(tr.tail), l.tri)?;
        let bh = t.scalar(self.bias(tr.head))?;
        let bt = t.scalar(self.bias(tr.tail))?;
        let x = record_query(&mut t, self.kind, l.n, uh, ua, trv)?;
        let phi = record_score(&mut t, self.metric, x, ut, bh, bt)?;
        t.value(phi).scalar()
    }
}

/// `k` uniform tail corruptions per positive, positive-major.
pub fn negative_samples<R: Rng + ?Sized>(rng: &mut R, batch: &[Triple], k: usize, num_entities: usize) -> Vec<Triple> {
    let mut out = Vec::with_capacity(batch.len() * k);
    if num_entities == 0 {
        return out;
    }
    for t in batch {
        for _ in 0..k {
            out.push(Triple::new(t.head, t.rel, rng.gen_range(0..num_entities)));
        }
    }
    out
}
