use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    #[default]
    Constant,
    /// `max(beta_min, 1 − epoch/max_epochs)`
    LinearDecay,
}

pub fn beta_at(schedule: BetaSchedule, epoch: usize, max_epochs: usize, beta_min: f64) -> f64 {
    match schedule {
        BetaSchedule::Constant => 1.0,
        BetaSchedule::LinearDecay => {
            let frac = if max_epochs == 0 { 1.0 } else { epoch as f64 / max_epochs as f64 };
            (1.0 - frac).max(beta_min)
        }
    }
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    lookahead: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(lookahead: usize) -> Self {
        Self { lookahead, best: None }
    }

    /// Records `loss` for `epoch`; returns `true` once `lookahead` epochs
    /// have passed without a strict improvement.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        match self.best {
            Some((_, b)) if !(loss < b) => {}
            _ => self.best = Some((epoch, loss)),
        }
        let (best_epoch, _) = self.best.expect("set above");
        epoch - best_epoch >= self.lookahead
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best.map(|(_, l)| l)
    }

    /// Whether the most recent observation set the best.
    pub fn is_best(&self, epoch: usize) -> bool {
        self.best_epoch() == Some(epoch)
    }
}
