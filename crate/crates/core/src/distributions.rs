//! Gaussian and Bernoulli primitives.
//!
//! Posteriors are diagonal Gaussians, hub prior components are isotropic
//! Gaussians with one shared scalar variance. Densities are evaluated in log
//! space; mixtures go through [`log_sum_exp`].

use crate::error::{dim_err, param_err, Result};

/// Probability clamp applied to decoder outputs before the Bernoulli likelihood.
pub const PROB_CLAMP: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal-covariance Gaussian `N(mean, diag(var))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Isotropic Gaussian `N(mean, var · I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsoGaussian {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return dim_err(format!("mean has {} entries, var has {}", mean.len(), var.len()));
        }
        if let Some(v) = var.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return param_err(format!("variance must be positive and finite, got {v}"));
        }
        Ok(Self { mean, var })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim] }
    }
}

impl IsoGaussian {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if !(var.is_finite() && var > 0.0) {
            return param_err(format!("variance must be positive and finite, got {var}"));
        }
        Ok(Self { mean, var })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], var: 1.0 }
    }
}

/// Shared view over both Gaussian shapes.
pub trait Gaussian {
    fn mean(&self) -> &[f64];
    fn var_at(&self, d: usize) -> f64;

    fn dim(&self) -> usize {
        self.mean().len()
    }
}

impl Gaussian for DiagGaussian {
    fn mean(&self) -> &[f64] {
        &self.mean
    }
    fn var_at(&self, d: usize) -> f64 {
        self.var[d]
    }
}

impl Gaussian for IsoGaussian {
    fn mean(&self) -> &[f64] {
        &self.mean
    }
    fn var_at(&self, _d: usize) -> f64 {
        self.var
    }
}

/// Squared 2-Wasserstein distance between diagonal Gaussians, without the
/// dimension check.
pub(crate) fn wasserstein2_sq_unchecked<P: Gaussian + ?Sized, Q: Gaussian + ?Sized>(
    p: &P,
    q: &Q,
) -> f64 {
    let (mp, mq) = (p.mean(), q.mean());
    let mut acc = 0.0;
    for d in 0..mp.len() {
        let dm = mp[d] - mq[d];
        let ds = p.var_at(d).sqrt() - q.var_at(d).sqrt();
        acc += dm * dm + ds * ds;
    }
    acc
}

/// Closed-form 2-Wasserstein distance between two diagonal Gaussians:
/// `sqrt(|μp − μq|² + |Σp^½ − Σq^½|_F²)`.
pub fn wasserstein2<P: Gaussian + ?Sized, Q: Gaussian + ?Sized>(p: &P, q: &Q) -> Result<f64> {
    if p.dim() != q.dim() {
        return dim_err(format!("wasserstein2 between dims {} and {}", p.dim(), q.dim()));
    }
    Ok(wasserstein2_sq_unchecked(p, q).sqrt())
}

/// Log density of `p` at `z`.
pub fn log_density<P: Gaussian + ?Sized>(p: &P, z: &[f64]) -> Result<f64> {
    if p.dim() != z.len() {
        return dim_err(format!("log_density of dim {} at point of dim {}", p.dim(), z.len()));
    }
    let mut acc = 0.0;
    for (d, (&zd, &md)) in z.iter().zip(p.mean()).enumerate() {
        let v = p.var_at(d);
        if !(v > 0.0) {
            return param_err(format!("nonpositive variance {v} in dimension {d}"));
        }
        let diff = zd - md;
        acc -= 0.5 * (LN_2PI + v.ln() + diff * diff / v);
    }
    Ok(acc)
}

/// `KL(q || p)` for a diagonal `q` and an isotropic `p`.
pub fn kl_diag_gaussians(q: &DiagGaussian, p: &IsoGaussian) -> Result<f64> {
    if q.mean.len() != p.mean.len() {
        return dim_err(format!("kl between dims {} and {}", q.mean.len(), p.mean.len()));
    }
    let mut acc = 0.0;
    for d in 0..q.mean.len() {
        let ratio = q.var[d] / p.var;
        let dm = q.mean[d] - p.mean[d];
        acc += ratio + dm * dm / p.var - 1.0 - ratio.ln();
    }
    Ok(0.5 * acc)
}

/// `Σ_d x_d ln p_d + (1 − x_d) ln(1 − p_d)` with `p` clamped to
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub fn bernoulli_loglik(probs: &[f64], x: &[f64]) -> Result<f64> {
    if probs.len() != x.len() {
        return dim_err(format!("{} probabilities for {} observations", probs.len(), x.len()));
    }
    Ok(bernoulli_loglik_unchecked(probs, x))
}

pub(crate) fn bernoulli_loglik_unchecked(probs: &[f64], x: &[f64]) -> f64 {
    probs
        .iter()
        .zip(x)
        .map(|(&p, &xd)| {
            let p = clamp_prob(p);
            xd * p.ln() + (1.0 - xd) * (1.0 - p).ln()
        })
        .sum()
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Numerically stable `ln Σ exp(v)`. Empty input gives `-∞`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
