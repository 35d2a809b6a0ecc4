//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgmodel::ModelKind;
use crate::manifold::Metric;

/// Learning rates of the documented search grid.
pub const LR_GRID: [f64; 3] = [1e-4, 5e-5, 1e-5];
/// Weight decays of the documented search grid.
pub const WEIGHT_DECAY_GRID: [f64; 2] = [1e-2, 1e-3];
/// Matrix sizes of the documented search grid.
pub const N_GRID: [usize; 3] = [14, 20, 24];

/// Hyperparameters of a training run.
///
/// Patience values are in epochs. Improvement is only observed at dev
/// evaluations, so they are converted to evaluation counts by rounding up:
/// with `eval_every = 20` the plateau rule fires after 3 evaluations without
/// improvement and early stopping after 25. Setting `eval_every = 1` counts
/// raw epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub burn_in_epochs: usize,
    pub burn_in_factor: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub eval_every: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub n: usize,
    pub model: ModelKind,
    pub metric: Metric,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5000,
            batch_size: 4096,
            negatives: 10,
            lr: 1e-4,
            weight_decay: 1e-3,
            burn_in_epochs: 10,
            burn_in_factor: 10.0,
            plateau_patience: 50,
            plateau_factor: 2.0,
            early_stop_patience: 500,
            eval_every: 20,
            grad_clip: 5.0,
            seed: 0,
            n: 14,
            model: ModelKind::Scaling,
            metric: Metric::Riemannian,
            deterministic: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Every settable key, in declaration order.
    pub const KEYS: [&'static str; 17] = [
        "epochs",
        "batch_size",
        "negatives",
        "lr",
        "weight_decay",
        "burn_in_epochs",
        "burn_in_factor",
        "plateau_patience",
        "plateau_factor",
        "early_stop_patience",
        "eval_every",
        "grad_clip",
        "seed",
        "n",
        "model",
        "metric",
        "deterministic",
    ];

    /// Sets one field from its textual form. Dashes in `key` are read as
    /// underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "epochs" => self.epochs = parse(&key, v)?,
            "batch_size" => self.batch_size = parse(&key, v)?,
            "negatives" | "k" => self.negatives = parse(&key, v)?,
            "lr" => self.lr = parse(&key, v)?,
            "weight_decay" => self.weight_decay = parse(&key, v)?,
            "burn_in_epochs" => self.burn_in_epochs = parse(&key, v)?,
            "burn_in_factor" => self.burn_in_factor = parse(&key, v)?,
            "plateau_patience" => self.plateau_patience = parse(&key, v)?,
            "plateau_factor" => self.plateau_factor = parse(&key, v)?,
            "early_stop_patience" => self.early_stop_patience = parse(&key, v)?,
            "eval_every" => self.eval_every = parse(&key, v)?,
            "grad_clip" => self.grad_clip = parse(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "n" => self.n = parse(&key, v)?,
            "model" => self.model = v.parse()?,
            "metric" => self.metric = v.parse()?,
            "deterministic" => self.deterministic = parse(&key, v)?,
            _ => return Err(Error::Invalid(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("{what} must be positive")));
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.n == 0 {
            return bad("n");
        }
        if self.eval_every == 0 {
            return bad("eval_every");
        }
        for (name, v) in [
            ("lr", self.lr),
            ("burn_in_factor", self.burn_in_factor),
            ("plateau_factor", self.plateau_factor),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(name);
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Invalid("weight_decay must be nonnegative".into()));
        }
        if !matches!(self.metric, Metric::Riemannian | Metric::F1) {
            return Err(Error::Invalid(format!(
                "metric must be riemannian or f1, got {}",
                self.metric
            )));
        }
        Ok(())
    }

    /// Evaluations without improvement before the learning rate is cut.
    pub fn plateau_evals(&self) -> usize {
        self.plateau_patience.div_ceil(self.eval_every).max(1)
    }

    /// Evaluations without improvement before training stops.
    pub fn early_stop_evals(&self) -> usize {
        self.early_stop_patience.div_ceil(self.eval_every).max(1)
    }

    /// Burn-in-adjusted rate for 1-based `epoch`, before plateau cuts.
    pub fn base_lr(&self, epoch: usize) -> f64 {
        if epoch <= self.burn_in_epochs {
            self.lr / self.burn_in_factor
        } else {
            self.lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 5000);
        assert_eq!(c.batch_size, 4096);
        assert_eq!(c.negatives, 10);
        assert!(LR_GRID.contains(&c.lr));
        assert!(WEIGHT_DECAY_GRID.contains(&c.weight_decay));
        assert_eq!((c.burn_in_epochs, c.burn_in_factor), (10, 10.0));
        assert_eq!((c.plateau_patience, c.plateau_factor), (50, 2.0));
        assert_eq!(c.early_stop_patience, 500);
        assert_eq!(c.plateau_evals(), 3);
        assert_eq!(c.early_stop_evals(), 25);
        assert!(N_GRID.contains(&c.n));
        c.validate().unwrap();
    }

    #[test]
    fn burn_in_schedule() {
        let c = TrainConfig::default();
        for e in 1..=10 {
            assert_eq!(c.base_lr(e), 1e-5);
        }
        assert_eq!(c.base_lr(11), 1e-4);
    }

    #[test]
    fn set_every_key() {
        let mut c = TrainConfig::default();
        let values = ["7", "32", "5", "0.001", "0.01", "2", "4", "9", "3", "11", "1", "2.5", "42", "6", "rotation", "f1", "true"];
        for (k, v) in TrainConfig::KEYS.iter().zip(values) {
            c.set(k, v).unwrap();
        }
        assert_eq!(c.epochs, 7);
        assert_eq!(c.model, ModelKind::Rotation);
        assert_eq!(c.metric, Metric::F1);
        assert!(c.deterministic);
        assert_eq!(c.plateau_evals(), 9);
        c.set("batch-size", "8").unwrap();
        assert_eq!(c.batch_size, 8);
        let err = c.set("learning_rate", "1").unwrap_err();
        assert!(err.to_string().contains("learning_rate"));
        assert!(c.set("lr", "fast").is_err());
        c.set("metric", "stein").unwrap();
        assert!(c.validate().is_err());
    }
}
