//! Full-graph training with Adam and validation-loss early stopping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dropout, GnnModel, GraphInput};
use crate::params::{Adam, AdamConfig, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), max_epochs: 800, patience: 100, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", a.lr)));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be positive".into()));
        }
        Ok(())
    }
}

/// Tracks the best monitored value; a strict decrease resets the counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    /// Records `value` for `epoch`; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub history: Vec<EpochLog>,
}

/// Trains on every node of `train`, monitors loss on every node of `val`,
/// and leaves `model` holding the parameters of the best epoch.
pub fn train(model: &mut GnnModel, train: &GraphInput, val: &GraphInput, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_rows = train.all_rows();
    let val_rows = val.all_rows();
    let mut adam = Adam::new(cfg.adam, &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: ParamStore = model.store.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let mut drop = Dropout { p: model.config.dropout, rng: Some(&mut rng) };
        let (train_loss, grads) = model.loss_and_grad(train, &train_rows, &mut drop)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        adam.step(&mut model.store, &grads);
        let val_loss = model.loss(val, &val_rows)?;
        history.push(EpochLog { epoch, train_loss, val_loss });
        if stopper.observe(epoch, val_loss) {
            best = model.store.clone();
        }
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    model.store = best;
    log::debug!(
        "{}: {} epochs, best epoch {} val loss {:.4}",
        model.config.kind,
        history.len(),
        stopper.best_epoch,
        stopper.best
    );
    Ok(TrainOutcome {
        epochs_run: history.len(),
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        stopped_early,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_stops_after_patience() {
        let mut s = EarlyStopping::new(100);
        let mut stopped_at = None;
        for epoch in 1..=800 {
            s.observe(epoch, 0.5);
            if s.should_stop() {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(101));
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn equal_value_is_not_an_improvement() {
        let mut s = EarlyStopping::new(2);
        assert!(s.observe(1, 1.0));
        assert!(!s.observe(2, 1.0));
        assert!(s.observe(3, 0.9));
        assert_eq!(s.since_best, 0);
    }

    #[test]
    fn zero_learning_rate_rejected() {
        let cfg = TrainConfig { adam: AdamConfig { lr: 0.0, ..AdamConfig::default() }, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
