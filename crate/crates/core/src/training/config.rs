use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::BetaSchedule;
use crate::error::{Error, Result};
use crate::hubness::DEFAULT_LAMBDA;
use crate::numerics::AdamConfig;

/// Every knob of a training run. Deserializes from TOML; missing keys take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Number of hub prior components `m` sampled per mini-batch.
    pub components: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub lambda: f64,
    pub beta_schedule: BetaSchedule,
    pub beta_min: f64,
    pub max_epochs: usize,
    pub lookahead: usize,
    /// Number of clusters for the hub-seeded k-means.
    pub clusters: Option<usize>,
    pub seed: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub learn_tau: bool,
    /// Initial (or pinned, when `learn_tau` is off) hub prior variance.
    pub prior_var: f64,
    pub kmeans_max_iters: usize,
    pub dynamic_binarization: bool,
    pub no_selection: bool,
    pub no_contrastive: bool,
    pub baseline_gaussian: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            components: 1000,
            latent_dim: 40,
            hidden: vec![300, 300],
            lambda: DEFAULT_LAMBDA,
            beta_schedule: BetaSchedule::Constant,
            beta_min: 0.1,
            max_epochs: 100,
            lookahead: 50,
            clusters: None,
            seed: 0,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            learn_tau: true,
            prior_var: 1.0,
            kmeans_max_iters: 100,
            dynamic_binarization: false,
            no_selection: false,
            no_contrastive: false,
            baseline_gaussian: false,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn uses_contrastive(&self) -> bool {
        !self.no_contrastive && !self.baseline_gaussian
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size < 4 {
            return fail(format!("batch_size must be at least 4, got {}", self.batch_size));
        }
        if self.components == 0 {
            return fail("components must be at least 1".into());
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1".into());
        }
        if self.lookahead > self.max_epochs {
            return fail(format!("lookahead {} exceeds max_epochs {}", self.lookahead, self.max_epochs));
        }
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return fail(format!("prior_var must be positive, got {}", self.prior_var));
        }
        if self.uses_contrastive() && self.clusters.is_none_or(|k| k == 0) {
            return fail("clusters must be set (number of classes) when the contrastive loss is on".into());
        }
        if !(0.0..=1.0).contains(&self.beta_min) {
            return fail(format!("beta_min must lie in [0, 1], got {}", self.beta_min));
        }
        Ok(())
    }
}
