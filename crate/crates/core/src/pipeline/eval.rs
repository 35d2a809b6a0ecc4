//! Ranking evaluation: filtered full ranking and sampled-candidate ranking.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgmodel::{KgDataset, KgModel, Scorer, Split, Triple};

/// Default number of sampled candidates.
pub const SAMPLED_M: usize = 100;

/// Rank of `target` among `scores` (higher is better), counting only the
/// indices where `keep` holds. Ties share the mean rank of their block.
pub fn mean_tie_rank(scores: &[f64], target: usize, keep: impl Fn(usize) -> bool) -> f64 {
    let s = scores[target];
    let mut above = 0usize;
    let mut tied = 0usize;
    for (i, &x) in scores.iter().enumerate() {
        if i == target || !keep(i) {
            continue;
        }
        if x > s {
            above += 1;
        } else if x == s {
            tied += 1;
        }
    }
    1.0 + above as f64 + tied as f64 / 2.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
}

impl Metrics {
    fn from_ranks(ranks: &[f64]) -> Self {
        let c = ranks.len();
        if c == 0 {
            return Metrics::default();
        }
        let mean = |f: &dyn Fn(f64) -> f64| ranks.iter().map(|&r| f(r)).sum::<f64>() / c as f64;
        Metrics {
            count: c,
            mrr: mean(&|r| 1.0 / r),
            hits1: mean(&|r| (r <= 1.0) as u8 as f64),
            hits3: mean(&|r| (r <= 3.0) as u8 as f64),
            hits10: mean(&|r| (r <= 10.0) as u8 as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub relation: usize,
    pub name: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub split: String,
    pub mode: String,
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_relation: Vec<RelationMetrics>,
    /// Rank of every query, in evaluation order.
    #[serde(skip)]
    pub ranks: Vec<(Triple, f64)>,
}

impl RankReport {
    fn build(dataset: &KgDataset, split: Split, mode: &str, ranks: Vec<(Triple, f64)>) -> Self {
        let all: Vec<f64> = ranks.iter().map(|r| r.1).collect();
        let mut by_rel: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (t, r) in &ranks {
            by_rel.entry(t.rel).or_default().push(*r);
        }
        RankReport {
            split: split.name().into(),
            mode: mode.into(),
            overall: Metrics::from_ranks(&all),
            per_relation: by_rel
                .into_iter()
                .map(|(rel, rs)| RelationMetrics {
                    relation: rel,
                    name: dataset.relations.name(rel).to_string(),
                    metrics: Metrics::from_ranks(&rs),
                })
                .collect(),
            ranks,
        }
    }

    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for RankReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} split, {} ranking, {} queries", self.split, self.mode, self.overall.count)?;
        writeln!(f, "{:<28} {:>7} {:>8} {:>8} {:>8} {:>8}", "relation", "count", "MRR", "H@1", "H@3", "H@10")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: &Metrics| {
            writeln!(
                f,
                "{:<28} {:>7} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                name, m.count, m.mrr, m.hits1, m.hits3, m.hits10
            )
        };
        for r in &self.per_relation {
            row(f, &r.name, &r.metrics)?;
        }
        row(f, "all", &self.overall)
    }
}

/// Tail queries for each raw triple of the split, plus the inverse query
/// `(t, r⁻¹, h)` when the dataset is augmented.
pub fn queries(dataset: &KgDataset, split: Split) -> Vec<Triple> {
    let raw = dataset.raw_relations;
    let mut out = Vec::new();
    for t in dataset.split(split).iter().filter(|t| t.rel < raw) {
        out.push(*t);
        if dataset.augmented {
            out.push(dataset.reversed(t));
        }
    }
    out
}

fn check_model(model: &KgModel, dataset: &KgDataset) -> Result<()> {
    if model.num_entities() != dataset.num_entities() || model.num_relations() != dataset.num_relations() {
        return Err(Error::Dimension(format!(
            "model has {} entities and {} relations, dataset {} and {}",
            model.num_entities(),
            model.num_relations(),
            dataset.num_entities(),
            dataset.num_relations()
        )));
    }
    Ok(())
}

/// Filtered ranking against every entity. Other true tails of the query are
/// removed from the candidate pool before ranking.
pub fn evaluate_filtered(model: &KgModel, dataset: &KgDataset, split: Split, parallel: bool) -> Result<RankReport> {
    check_model(model, dataset)?;
    let qs = queries(dataset, split);
    if qs.is_empty() {
        return Err(Error::Invalid(format!("{} split is empty", split.name())));
    }
    let scorer = Scorer::new(model)?;
    let rank_one = |q: &Triple| -> Result<(Triple, f64)> {
        let scores = scorer.score_all_tails(q.head, q.rel)?;
        let truth = dataset.true_tails(q.head, q.rel);
        let r = mean_tie_rank(&scores, q.tail, |e| truth.is_none_or(|s| !s.contains(&e)));
        Ok((*q, r))
    };
    let ranks: Vec<(Triple, f64)> = if parallel {
        qs.par_iter().map(rank_one).collect::<Result<_>>()?
    } else {
        qs.iter().map(rank_one).collect::<Result<_>>()?
    };
    Ok(RankReport::build(dataset, split, "filtered", ranks))
}

/// Ranking against `m` candidates drawn without replacement from the
/// entities that are not true tails of the query (all of them when fewer
/// remain). Tail direction only.
pub fn evaluate_sampled<R: Rng + ?Sized>(
    model: &KgModel,
    dataset: &KgDataset,
    split: Split,
    m: usize,
    rng: &mut R,
) -> Result<RankReport> {
    check_model(model, dataset)?;
    let raw = dataset.raw_relations;
    let qs: Vec<Triple> = dataset.split(split).iter().filter(|t| t.rel < raw).copied().collect();
    if qs.is_empty() {
        return Err(Error::Invalid(format!("{} split is empty", split.name())));
    }
    let scorer = Scorer::new(model)?;
    let mut ranks = Vec::with_capacity(qs.len());
    for q in qs {
        let truth = dataset.true_tails(q.head, q.rel);
        let pool: Vec<usize> = (0..dataset.num_entities())
            .filter(|e| *e != q.tail && truth.is_none_or(|s| !s.contains(e)))
            .collect();
        let picked: Vec<usize> = if pool.len() <= m {
            pool
        } else {
            index::sample(rng, pool.len(), m).into_iter().map(|i| pool[i]).collect()
        };
        let mut cands = Vec::with_capacity(picked.len() + 1);
        cands.push(q.tail);
        cands.extend(picked);
        let scores = scorer.score_tails(q.head, q.rel, &cands)?;
        ranks.push((q, mean_tie_rank(&scores, 0, |_| true)));
    }
    Ok(RankReport::build(dataset, split, "sampled", ranks))
}
