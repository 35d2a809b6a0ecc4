//! VVD norm and angle statistics of triples, for plotting.
//!
//! For a triple `(h, r, t)` the record holds the VVD `v` between the
//! transformed head `M_r(H)` and the tail: its Euclidean norm and its angle
//! (radians) to the barycenter direction `(n−1, n−3, …, 1−n)`.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kgmodel::{negative_samples, KgDataset, KgModel, Triple};
use crate::manifold::{vvd, SpdPoint};

pub const CSV_HEADER: [&str; 6] = ["relation", "label", "head", "tail", "vvd_norm", "vvd_angle"];

/// `(n−1, n−3, …, −n+3, −n+1)`.
pub fn barycenter(n: usize) -> Vec<f64> {
    (0..n).map(|i| n as f64 - 1.0 - 2.0 * i as f64).collect()
}

/// Angle in `[0, π]` between `v` and `b`; `0` when either is zero.
pub fn angle(v: &[f64], b: &[f64]) -> f64 {
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let c = v.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (nv * nb);
    c.clamp(-1.0, 1.0).acos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Train,
    Negative,
    Valid,
    RelationMarker,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Train => "train",
            Label::Negative => "negative",
            Label::Valid => "valid",
            Label::RelationMarker => "relation_marker",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VvdRecord {
    pub relation: usize,
    pub label: Label,
    /// `None` for relation markers.
    pub head: Option<usize>,
    pub tail: Option<usize>,
    pub vvd_norm: f64,
    pub vvd_angle: f64,
}

fn record_from(p: &SpdPoint, q: &SpdPoint) -> Result<(f64, f64)> {
    let v = vvd(p, q)?;
    let b = barycenter(p.n());
    Ok((v.l2(), angle(v.as_slice(), &b)))
}

/// Record of `vvd(M_r(H), T)`.
pub fn vvd_record(model: &KgModel, t: &Triple, label: Label) -> Result<VvdRecord> {
    let s = model.transform_head(t.head, t.rel)?;
    let (vvd_norm, vvd_angle) = record_from(&s, &model.embed_entity(t.tail)?)?;
    Ok(VvdRecord {
        relation: t.rel,
        label,
        head: Some(t.head),
        tail: Some(t.tail),
        vvd_norm,
        vvd_angle,
    })
}

/// Record of `vvd(I, R_r)`.
pub fn relation_marker(model: &KgModel, r: usize) -> Result<VvdRecord> {
    let (vvd_norm, vvd_angle) = record_from(&SpdPoint::identity(model.n()), &model.embed_rel_add(r)?)?;
    Ok(VvdRecord {
        relation: r,
        label: Label::RelationMarker,
        head: None,
        tail: None,
        vvd_norm,
        vvd_angle,
    })
}

/// All records in export order: train triples, one block of sampled
/// negatives (`negatives` uniform tail corruptions per train triple),
/// valid triples, then one marker per relation. Only raw (non-inverse)
/// relations are included.
pub fn analysis_records(model: &KgModel, data: &KgDataset, negatives: usize, seed: u64) -> Result<Vec<VvdRecord>> {
    let raw = data.raw_relations;
    let train: Vec<Triple> = data.train.iter().filter(|t| t.rel < raw).copied().collect();
    let valid: Vec<Triple> = data.valid.iter().filter(|t| t.rel < raw).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negs = negative_samples(&mut rng, &train, negatives, data.num_entities());
    let mut out = Vec::with_capacity(train.len() + negs.len() + valid.len() + raw);
    for (set, label) in [(&train, Label::Train), (&negs, Label::Negative), (&valid, Label::Valid)] {
        for t in set {
            out.push(vvd_record(model, t, label)?);
        }
    }
    for r in 0..raw {
        out.push(relation_marker(model, r)?);
    }
    Ok(out)
}

/// Writes the analysis CSV. Relations and entities are written by name;
/// angles are in radians.
pub fn export_analysis(model: &KgModel, data: &KgDataset, negatives: usize, seed: u64, out: &Path) -> Result<usize> {
    let records = analysis_records(model, data, negatives, seed)?;
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(out, e),
        k => Error::Invalid(format!("{}: csv: {k:?}", out.display())),
    };
    let mut w = csv::Writer::from_path(out).map_err(io)?;
    w.write_record(CSV_HEADER).map_err(io)?;
    let name = |e: Option<usize>| e.map(|e| data.entities.name(e).to_string()).unwrap_or_default();
    for r in &records {
        w.write_record([
            data.relations.name(r.relation).to_string(),
            r.label.to_string(),
            name(r.head),
            name(r.tail),
            r.vvd_norm.to_string(),
            r.vvd_angle.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(records.len())
}
