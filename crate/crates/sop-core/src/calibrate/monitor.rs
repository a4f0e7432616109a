use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Early-stopping monitor with strict-improvement semantics: a validation
/// loss counts as progress only if it is strictly below the best seen
/// (min_delta 0, comparison `<`). After `patience` consecutive
/// non-improvements the monitor triggers and refuses further updates.
///
/// Every plug owns one of these. Sharing a monitor across targets is
/// precisely the failure this crate exists to avoid, so nothing in the API
/// permits it: a monitor cannot be reset or rewound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Monitor {
    patience: usize,
    best_val: f64,
    best_epoch: usize,
    bad_epochs: usize,
    last_epoch: usize,
    triggered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorDecision {
    /// Strict improvement — caller should snapshot now.
    Improved,
    Continue,
    /// Patience exhausted — stop training; further updates are an error.
    Stop,
}

impl Monitor {
    pub fn new(patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("monitor patience must be ≥ 1".into()));
        }
        Ok(Self {
            patience,
            best_val: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
            last_epoch: 0,
            triggered: false,
        })
    }

    /// Feed the validation loss of `epoch` (1-based, strictly increasing).
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> Result<MonitorDecision> {
        if self.triggered {
            return Err(Error::State(format!(
                "monitor already triggered at epoch {}; update({epoch}) is invalid",
                self.last_epoch
            )));
        }
        if epoch <= self.last_epoch {
            return Err(Error::State(format!(
                "monitor epochs must increase: got {epoch} after {}",
                self.last_epoch
            )));
        }
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "monitor: non-finite validation loss at epoch {epoch}"
            )));
        }
        self.last_epoch = epoch;
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            Ok(MonitorDecision::Improved)
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.triggered = true;
                Ok(MonitorDecision::Stop)
            } else {
                Ok(MonitorDecision::Continue)
            }
        }
    }

    pub fn triggered(&self) -> bool {
        self.triggered
    }

    pub fn best_val(&self) -> f64 {
        self.best_val
    }

    /// Epoch of the best validation loss; 0 if none seen yet.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn bad_epochs(&self) -> usize {
        self.bad_epochs
    }

    pub fn patience(&self) -> usize {
        self.patience
    }
}
