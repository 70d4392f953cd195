use serde::{Deserialize, Serialize};

use crate::distributions::{
    bernoulli_loglik_unchecked, kl_diag_gaussians, log_density, log_sum_exp, wasserstein2_sq_unchecked,
    DiagGaussian, IsoGaussian,
};
use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor2;
use crate::training::Triplet;

/// Uniform mixture of hub prior components sharing one variance.
#[derive(Debug, Clone, PartialEq)]
pub struct HubPriorBatch {
    pub components: Vec<IsoGaussian>,
}

impl HubPriorBatch {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorKind {
    /// Single-sample Monte-Carlo KL against the hub mixture.
    HubMixture,
    /// Closed-form KL against `N(0, I)`.
    StandardNormal,
}

/// Which loss terms are active and how they are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub recon_weight: f64,
    pub contrastive_weight: f64,
    pub beta: f64,
    pub prior: PriorKind,
}

impl LossSpec {
    pub fn hub_vae(beta: f64) -> Self {
        Self { recon_weight: 1.0, contrastive_weight: 1.0, beta, prior: PriorKind::HubMixture }
    }

    pub fn no_contrastive(beta: f64) -> Self {
        Self { contrastive_weight: 0.0, ..Self::hub_vae(beta) }
    }

    pub fn gaussian_vae(beta: f64) -> Self {
        Self { recon_weight: 1.0, contrastive_weight: 0.0, beta, prior: PriorKind::StandardNormal }
    }

    pub fn zero() -> Self {
        Self { recon_weight: 0.0, contrastive_weight: 0.0, beta: 0.0, prior: PriorKind::HubMixture }
    }
}

/// Batch-averaged loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub contrastive: f64,
    pub beta: f64,
    /// `recon_weight·recon + contrastive_weight·contrastive + beta·kl`
    pub total: f64,
}

pub(crate) fn check_finite(term: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term, value })
    }
}

/// Mean negative Bernoulli log-likelihood over rows.
pub fn loss_recon(x: &Tensor2, probs: &Tensor2) -> Result<f64> {
    if x.shape() != probs.shape() {
        return dim_err(format!("inputs {:?} vs probabilities {:?}", x.shape(), probs.shape()));
    }
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = x.row_iter().zip(probs.row_iter()).map(|(xr, pr)| -bernoulli_loglik_unchecked(pr, xr)).sum();
    Ok(total / x.rows() as f64)
}

/// Single-sample estimate of `KL(q_i || (1/m) Σ_j r_j)`, averaged over rows:
/// `log q_i(z_i) − logsumexp_j log r_j(z_i) + ln m`.
pub fn loss_kl_mixture(posteriors: &[DiagGaussian], z: &Tensor2, prior: &HubPriorBatch) -> Result<f64> {
    if prior.is_empty() {
        return Err(Error::EmptyPool);
    }
    if posteriors.len() != z.rows() {
        return dim_err(format!("{} posteriors for {} samples", posteriors.len(), z.rows()));
    }
    if posteriors.is_empty() {
        return Ok(0.0);
    }
    let ln_m = (prior.len() as f64).ln();
    let mut logs = vec![0.0; prior.len()];
    let mut total = 0.0;
    for (q, zi) in posteriors.iter().zip(z.row_iter()) {
        for (l, comp) in logs.iter_mut().zip(&prior.components) {
            *l = log_density(comp, zi)?;
        }
        total += log_density(q, zi)? - log_sum_exp(&logs) + ln_m;
    }
    Ok(total / posteriors.len() as f64)
}

/// Closed-form `KL(q_i || N(0, I))`, averaged over rows.
pub fn loss_kl_standard(posteriors: &[DiagGaussian]) -> Result<f64> {
    if posteriors.is_empty() {
        return Ok(0.0);
    }
    let dim = posteriors[0].mean.len();
    let standard = IsoGaussian::standard(dim);
    let mut total = 0.0;
    for q in posteriors {
        total += kl_diag_gaussians(q, &standard)?;
    }
    Ok(total / posteriors.len() as f64)
}

/// Margin-1 hinge on Wasserstein distances, summed over each anchor's
/// negatives and averaged over the batch rows.
pub fn loss_contrastive(triplets: &[Triplet], posteriors: &[DiagGaussian]) -> f64 {
    if posteriors.is_empty() {
        return 0.0;
    }
    let w = |a: usize, b: usize| wasserstein2_sq_unchecked(&posteriors[a], &posteriors[b]).sqrt();
    let mut total = 0.0;
    for t in triplets {
        let pos = w(t.anchor, t.positive);
        for &n in &t.negatives {
            total += (pos - w(t.anchor, n) + 1.0).max(0.0);
        }
    }
    total / posteriors.len() as f64
}
