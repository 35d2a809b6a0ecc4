//! Checkpoint files.
//!
//! Layout: the 8-byte tag `SPDGCKPT`, the header length as a little-endian
//! `u64`, a UTF-8 JSON header, then the parameter blocks as little-endian
//! `f64`, in the order and with the lengths the header declares.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::AdamW;
use crate::error::{Error, Result};
use crate::isometry::PAIR_ORDER;
use crate::kgmodel::{KgDataset, KgModel, ModelKind};
use crate::manifold::Metric;

pub const MAGIC: &[u8; 8] = b"SPDGCKPT";
pub const FORMAT_VERSION: u32 = 1;

const BLOCK_NAMES: [&str; 6] = ["entities", "rel_add", "rel_transform", "biases", "adam_m", "adam_v"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    /// Hex-encoded 32-byte seed.
    pub seed: String,
    pub stream: u64,
    /// Decimal word position (a `u128`).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |what: &str| Error::Checkpoint(format!("invalid rng {what}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed length"))?;
        let pos: u128 = self.word_pos.parse().map_err(|_| bad("word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    /// Product of plateau cuts applied so far.
    pub lr_scale: f64,
    /// Evaluations since the last improvement or cut.
    pub plateau_evals: usize,
    /// Evaluations since the last improvement.
    pub stale_evals: usize,
}

impl Default for Scheduler {
    fn default() -> Self {
        Scheduler {
            lr_scale: 1.0,
            plateau_evals: 0,
            stale_evals: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub n: usize,
    pub entities: usize,
    pub relations: usize,
    pub raw_relations: usize,
    pub model_kind: ModelKind,
    pub metric: Metric,
    pub pair_order: String,
    pub epoch: usize,
    pub best_dev_mrr: Option<f64>,
    pub best_epoch: Option<usize>,
    pub rng: RngState,
    pub optimizer: AdamW,
    pub scheduler: Scheduler,
    pub config: TrainConfig,
    pub blocks: Vec<Block>,
}

/// Everything needed to continue a run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: KgModel,
    pub optimizer: AdamW,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub scheduler: Scheduler,
    pub best_dev_mrr: Option<f64>,
    pub best_epoch: Option<usize>,
    pub raw_relations: usize,
}

impl TrainState {
    pub fn header(&self) -> Header {
        let l = self.model.layout();
        let [a, b, c, d] = l.block_lens();
        let lens = [a, b, c, d, self.optimizer.m.len(), self.optimizer.v.len()];
        Header {
            format_version: FORMAT_VERSION,
            n: l.n,
            entities: l.entities,
            relations: l.relations,
            raw_relations: self.raw_relations,
            model_kind: self.model.kind(),
            metric: self.model.metric(),
            pair_order: PAIR_ORDER.to_string(),
            epoch: self.epoch,
            best_dev_mrr: self.best_dev_mrr,
            best_epoch: self.best_epoch,
            rng: RngState::capture(&self.rng),
            optimizer: self.optimizer.clone(),
            scheduler: self.scheduler.clone(),
            config: self.config.clone(),
            blocks: BLOCK_NAMES
                .iter()
                .zip(lens)
                .map(|(n, len)| Block {
                    name: n.to_string(),
                    len,
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let floats = self.model.params().len() + 2 * self.optimizer.m.len();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self
            .model
            .params()
            .iter()
            .chain(&self.optimizer.m)
            .chain(&self.optimizer.v)
        {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad tag)".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if hlen > body.len() {
            return Err(bad(format!("header length {hlen} exceeds file size")));
        }
        let h: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(format!("corrupted header: {e}")))?;
        if h.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "format version {} not supported (expected {FORMAT_VERSION})",
                h.format_version
            )));
        }
        if h.pair_order != PAIR_ORDER {
            return Err(bad(format!("unknown pair order `{}`", h.pair_order)));
        }
        let names: Vec<&str> = h.blocks.iter().map(|b| b.name.as_str()).collect();
        if names != BLOCK_NAMES {
            return Err(bad(format!("unexpected blocks {names:?}")));
        }
        let payload = &body[hlen..];
        let declared: usize = h.blocks.iter().map(|b| b.len).sum();
        if payload.len() != 8 * declared {
            return Err(bad(format!(
                "payload has {} bytes, header declares {} floats",
                payload.len(),
                declared
            )));
        }
        let mut floats = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |len: usize| -> Vec<f64> { floats.by_ref().take(len).collect() };
        let model_len: usize = h.blocks[..4].iter().map(|b| b.len).sum();
        let params = take(model_len);
        let model = KgModel::from_params(h.model_kind, h.metric, h.n, h.entities, h.relations, params)
            .map_err(|e| bad(format!("parameter blocks: {e}")))?;
        let expect = model.layout().block_lens();
        for (b, want) in h.blocks.iter().zip(expect) {
            if b.len != want {
                return Err(bad(format!("block `{}` has {} values, expected {want}", b.name, b.len)));
            }
        }
        let (ml, vl) = (h.blocks[4].len, h.blocks[5].len);
        if ml != model.params().len() || vl != ml {
            return Err(bad("optimizer moments do not match the parameters".into()));
        }
        let mut optimizer = h.optimizer.clone();
        optimizer.m = take(ml);
        optimizer.v = take(vl);
        Ok(TrainState {
            config: h.config,
            model,
            optimizer,
            rng: h.rng.restore()?,
            epoch: h.epoch,
            scheduler: h.scheduler,
            best_dev_mrr: h.best_dev_mrr,
            best_epoch: h.best_epoch,
            raw_relations: h.raw_relations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Errors unless the model was trained on a dataset of this shape.
    pub fn check_dataset(&self, data: &KgDataset) -> Result<()> {
        let m = &self.model;
        if m.num_entities() != data.num_entities()
            || m.num_relations() != data.num_relations()
            || self.raw_relations != data.raw_relations
        {
            return Err(Error::Dimension(format!(
                "checkpoint expects {} entities and {} relations ({} raw), dataset has {} and {} ({} raw)",
                m.num_entities(),
                m.num_relations(),
                self.raw_relations,
                data.num_entities(),
                data.num_relations(),
                data.raw_relations
            )));
        }
        Ok(())
    }
}
