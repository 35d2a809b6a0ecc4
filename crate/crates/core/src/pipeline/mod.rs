//! Training and evaluation.

mod checkpoint;
mod config;
mod eval;
mod optim;
mod train;

pub use checkpoint::{Block, Header, RngState, Scheduler, TrainState, FORMAT_VERSION, MAGIC};
pub use config::{TrainConfig, LR_GRID, N_GRID, WEIGHT_DECAY_GRID};
pub use eval::{evaluate_filtered, evaluate_sampled, mean_tie_rank, queries, Metrics, RankReport, RelationMetrics, SAMPLED_M};
pub use optim::{clip_global_norm, AdamW};
pub use train::{resume, train, HistoryRow, TrainOutcome, BEST_FILE, HISTORY_FILE, HISTORY_HEADER, LAST_FILE};
