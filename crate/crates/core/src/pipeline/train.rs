//! The training loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Scheduler, TrainState};
use super::config::TrainConfig;
use super::eval::{evaluate_filtered, Metrics};
use super::optim::{clip_global_norm, AdamW};
use crate::error::{Error, Result};
use crate::kgmodel::{negative_samples, KgDataset, KgModel, Split};

pub const HISTORY_HEADER: &str = "epoch,lr,loss,dev_mrr,dev_h1,dev_h3,dev_h10";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_FILE: &str = "best.ckpt";
pub const LAST_FILE: &str = "last.ckpt";

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss per positive triple.
    pub loss: f64,
    pub dev: Option<Metrics>,
}

impl HistoryRow {
    pub fn csv(&self) -> String {
        let dev = match &self.dev {
            Some(m) => format!("{},{},{},{}", m.mrr, m.hits1, m.hits3, m.hits10),
            None => ",,,".into(),
        };
        format!("{},{},{},{}", self.epoch, self.lr, self.loss, dev)
    }
}

impl TrainState {
    /// Fresh state: model initialized from the config seed.
    pub fn initial(config: &TrainConfig, data: &KgDataset) -> Result<Self> {
        config.validate()?;
        if !data.augmented {
            return Err(Error::Invalid("training needs a dataset augmented with inverse relations".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = KgModel::init(
            &mut rng,
            config.model,
            config.metric,
            config.n,
            data.num_entities(),
            data.num_relations(),
        )?;
        let optimizer = AdamW::new(model.params().len());
        Ok(TrainState {
            config: config.clone(),
            model,
            optimizer,
            rng,
            epoch: 0,
            scheduler: Scheduler::default(),
            best_dev_mrr: None,
            best_epoch: None,
            raw_relations: data.raw_relations,
        })
    }

    /// Learning rate used for the next epoch.
    pub fn next_lr(&self) -> f64 {
        self.config.base_lr(self.epoch + 1) * self.scheduler.lr_scale
    }

    /// One pass over the shuffled training triples.
    pub fn run_epoch(&mut self, data: &KgDataset) -> Result<HistoryRow> {
        let epoch = self.epoch + 1;
        let lr = self.next_lr();
        let cfg = &self.config;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |msg: String| Error::Diverged {
                epoch,
                batch: b,
                msg,
            };
            let pos: Vec<_> = chunk.iter().map(|&i| data.train[i]).collect();
            let neg = negative_samples(&mut self.rng, &pos, cfg.negatives, data.num_entities());
            let (loss, mut g) = self
                .model
                .loss_and_grad(&pos, &neg, cfg.negatives, !cfg.deterministic)
                .map_err(|e| if e.is_numerical() { diverged(e.to_string()) } else { e })?;
            if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
                return Err(diverged("non-finite loss or gradient".into()));
            }
            clip_global_norm(&mut g, cfg.grad_clip);
            self.optimizer.update(self.model.params_mut(), &g, lr, cfg.weight_decay);
            if self.model.params().iter().any(|x| !x.is_finite()) {
                return Err(diverged("non-finite parameters after update".into()));
            }
            total += loss;
        }
        self.epoch = epoch;
        let loss = if data.train.is_empty() { 0.0 } else { total / data.train.len() as f64 };
        Ok(HistoryRow {
            epoch,
            lr,
            loss,
            dev: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    pub best: TrainState,
    pub last: TrainState,
    pub stopped_early: bool,
}

/// Writes `history.csv`, `best.ckpt` and `last.ckpt` as training goes.
struct Artifacts {
    dir: PathBuf,
    history: BufWriter<File>,
}

impl Artifacts {
    fn open(dir: &Path, append: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stale = dir.join(BEST_FILE);
        if !append && stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
        let p = dir.join(HISTORY_FILE);
        let exists = p.exists();
        let f = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(&p)
            .map_err(|e| Error::io(&p, e))?;
        let mut a = Artifacts {
            dir: dir.to_path_buf(),
            history: BufWriter::new(f),
        };
        if !(append && exists) {
            a.line(HISTORY_HEADER)?;
        }
        Ok(a)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        let p = self.dir.join(HISTORY_FILE);
        writeln!(self.history, "{s}")
            .and_then(|_| self.history.flush())
            .map_err(|e| Error::io(p, e))
    }

    fn save(&self, name: &str, s: &TrainState) -> Result<()> {
        s.save(&self.dir.join(name))
    }
}

/// Trains from scratch. With `out_dir`, writes the history CSV and the best
/// and last checkpoints there.
pub fn train(config: &TrainConfig, data: &KgDataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let state = TrainState::initial(config, data)?;
    run(state, data, out_dir, false)
}

/// Continues a run from a saved state up to `state.config.epochs`. The
/// history file in `out_dir` is appended to.
pub fn resume(state: TrainState, data: &KgDataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    state.check_dataset(data)?;
    run(state, data, out_dir, true)
}

fn run(mut state: TrainState, data: &KgDataset, out_dir: Option<&Path>, append: bool) -> Result<TrainOutcome> {
    let mut art = out_dir.map(|d| Artifacts::open(d, append)).transpose()?;
    let cfg = state.config.clone();
    let has_dev = !data.valid.is_empty();
    if !has_dev {
        log::warn!("no validation triples: dev evaluation and early stopping disabled");
    }
    let mut history = Vec::new();
    let mut best: Option<TrainState> = None;
    let mut stopped_early = false;
    if let Some(a) = &art {
        if state.epoch == 0 {
            a.save(LAST_FILE, &state)?;
        }
    }
    while state.epoch < cfg.epochs {
        let mut row = state.run_epoch(data)?;
        if has_dev && state.epoch % cfg.eval_every == 0 {
            let report = evaluate_filtered(&state.model, data, Split::Valid, !cfg.deterministic)?;
            let mrr = report.mrr();
            row.dev = Some(report.overall.clone());
            let improved = state.best_dev_mrr.is_none_or(|b| mrr > b);
            let sch = &mut state.scheduler;
            if improved {
                state.best_dev_mrr = Some(mrr);
                state.best_epoch = Some(state.epoch);
                sch.plateau_evals = 0;
                sch.stale_evals = 0;
            } else {
                sch.plateau_evals += 1;
                sch.stale_evals += 1;
                if sch.plateau_evals >= cfg.plateau_evals() {
                    sch.lr_scale /= cfg.plateau_factor;
                    sch.plateau_evals = 0;
                    log::info!("epoch {}: dev MRR plateaued, learning rate scale now {}", state.epoch, sch.lr_scale);
                }
            }
            log::info!(
                "epoch {}: loss {:.6}, dev MRR {:.4}, H@1 {:.4}, H@10 {:.4}",
                state.epoch,
                row.loss,
                mrr,
                report.overall.hits1,
                report.overall.hits10
            );
            if improved {
                if let Some(a) = &art {
                    a.save(BEST_FILE, &state)?;
                }
                best = Some(state.clone());
            }
            if let Some(a) = &art {
                a.save(LAST_FILE, &state)?;
            }
            if state.scheduler.stale_evals >= cfg.early_stop_evals() {
                stopped_early = true;
            }
        } else {
            log::debug!("epoch {}: loss {:.6}, lr {}", state.epoch, row.loss, row.lr);
        }
        if let Some(a) = &mut art {
            a.line(&row.csv())?;
        }
        history.push(row);
        if stopped_early {
            log::info!("early stop at epoch {}", state.epoch);
            break;
        }
    }
    if let Some(a) = &art {
        a.save(LAST_FILE, &state)?;
    }
    let best = match best {
        Some(b) => b,
        None => {
            // a resumed run may have found its best before the resume point
            let prior = out_dir.map(|d| d.join(BEST_FILE)).filter(|p| p.exists());
            match prior {
                Some(p) if append => TrainState::load(&p)?,
                _ => state.clone(),
            }
        }
    };
    if let Some(a) = &art {
        if !a.dir.join(BEST_FILE).exists() {
            a.save(BEST_FILE, &best)?;
        }
    }
    Ok(TrainOutcome {
        history,
        best,
        last: state,
        stopped_early,
    })
}
