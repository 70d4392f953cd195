//! One training step's forward pass and its exact reverse pass.
//!
//! The encoder runs once over the data rows stacked on top of the hub rows,
//! so hub prior means and data posteriors share every encoder weight. The
//! reparameterization noise is fixed on entry, which makes the loss a
//! deterministic function of the parameters.

use rand::Rng;

use super::loss::{check_finite, loss_contrastive, loss_kl_mixture, loss_kl_standard, loss_recon};
use super::network::{dense, dense_backward, sigmoid, softplus, trunk_backward, trunk_forward, TrunkCache};
use super::{standard_normal, Architecture, HubPriorBatch, LossBreakdown, LossSpec, PriorKind, VAR_FLOOR};
use crate::distributions::{wasserstein2_sq_unchecked, DiagGaussian, IsoGaussian, PROB_CLAMP};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{ParamSet, Tensor2};
use crate::training::Triplet;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

pub struct BatchForward {
    n_data: usize,
    enc_cache: TrunkCache,
    enc_h: Tensor2,
    /// Means of data rows followed by hub rows.
    mean: Tensor2,
    var_pre: Tensor2,
    var: Tensor2,
    eps: Tensor2,
    z: Tensor2,
    dec_cache: TrunkCache,
    dec_h: Tensor2,
    /// Unclamped logistic outputs.
    raw_probs: Tensor2,
    probs: Tensor2,
    tau: f64,
}

impl BatchForward {
    /// Runs encoder and decoder. `hubs` rows are encoded alongside `x` but
    /// only contribute their means (as hub prior components).
    pub fn run(
        arch: &Architecture,
        params: &ParamSet,
        x: &Tensor2,
        hubs: Option<&Tensor2>,
        eps: Tensor2,
    ) -> Result<Self> {
        if x.cols() != arch.input_dim {
            return dim_err(format!("batch has {} columns, model expects {}", x.cols(), arch.input_dim));
        }
        if eps.shape() != (x.rows(), arch.latent_dim) {
            return dim_err(format!("noise {:?} for batch of {} rows", eps.shape(), x.rows()));
        }
        let stacked = match hubs {
            Some(h) if h.rows() > 0 => x.vstack(h)?,
            _ => x.clone(),
        };
        let (enc_h, enc_cache) = trunk_forward(params, &arch.encoder_layers(), &stacked)?;
        let mean = dense(params, arch.mean_head(), &enc_h)?;
        let var_pre = dense(params, arch.var_head(), &enc_h)?;
        let var = var_pre.map(|a| softplus(a) + VAR_FLOOR);
        if !mean.all_finite() || !var.all_finite() {
            return Err(Error::NonFinite { term: "encoder", value: f64::NAN });
        }
        let n_data = x.rows();
        let d = arch.latent_dim;
        let mut z = Tensor2::zeros(n_data, d);
        for i in 0..n_data {
            for c in 0..d {
                z.set(i, c, mean.get(i, c) + var.get(i, c).sqrt() * eps.get(i, c));
            }
        }
        let (dec_h, dec_cache) = trunk_forward(params, &arch.decoder_layers(), &z)?;
        let raw_probs = dense(params, arch.output_layer(), &dec_h)?.map(sigmoid);
        let probs = raw_probs.map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP));
        let tau = params.get(arch.tau_index()).data()[0];
        Ok(Self {
            n_data,
            enc_cache,
            enc_h,
            mean,
            var_pre,
            var,
            eps,
            z,
            dec_cache,
            dec_h,
            raw_probs,
            probs,
            tau,
        })
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn n_hubs(&self) -> usize {
        self.mean.rows() - self.n_data
    }

    pub fn z(&self) -> &Tensor2 {
        &self.z
    }

    pub fn eps(&self) -> &Tensor2 {
        &self.eps
    }

    pub fn probs(&self) -> &Tensor2 {
        &self.probs
    }

    /// Posteriors of the data rows.
    pub fn posteriors(&self) -> Vec<DiagGaussian> {
        (0..self.n_data)
            .map(|i| DiagGaussian { mean: self.mean.row(i).to_vec(), var: self.var.row(i).to_vec() })
            .collect()
    }

    /// Hub prior components, one per hub row.
    pub fn hub_prior(&self) -> HubPriorBatch {
        let var = self.tau.exp();
        HubPriorBatch {
            components: (self.n_data..self.mean.rows())
                .map(|i| IsoGaussian { mean: self.mean.row(i).to_vec(), var })
                .collect(),
        }
    }

    /// Loss terms evaluated with the standalone loss functions.
    pub fn losses(&self, x: &Tensor2, triplets: &[Triplet], spec: &LossSpec) -> Result<LossBreakdown> {
        let posteriors = self.posteriors();
        let recon = check_finite("reconstruction", loss_recon(x, &self.probs)?)?;
        let kl = if spec.beta == 0.0 {
            0.0
        } else {
            match spec.prior {
                PriorKind::HubMixture => loss_kl_mixture(&posteriors, &self.z, &self.hub_prior())?,
                PriorKind::StandardNormal => loss_kl_standard(&posteriors)?,
            }
        };
        let kl = check_finite("kl", kl)?;
        let contrastive = if spec.contrastive_weight == 0.0 {
            0.0
        } else {
            check_finite("contrastive", loss_contrastive(triplets, &posteriors))?
        };
        let total = spec.recon_weight * recon + spec.contrastive_weight * contrastive + spec.beta * kl;
        Ok(LossBreakdown { recon, kl, contrastive, beta: spec.beta, total: check_finite("total", total)? })
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn backward(
        &self,
        arch: &Architecture,
        params: &ParamSet,
        x: &Tensor2,
        triplets: &[Triplet],
        spec: &LossSpec,
    ) -> Result<(LossBreakdown, ParamSet)> {
        let losses = self.losses(x, triplets, spec)?;
        let mut grads = params.zeros_like();
        let b = self.n_data;
        if b == 0 {
            return Ok((losses, grads));
        }
        let d = arch.latent_dim;
        let inv_b = 1.0 / b as f64;
        let rows = self.mean.rows();

        let mut d_z = Tensor2::zeros(b, d);
        let mut d_mean = Tensor2::zeros(rows, d);
        let mut d_var = Tensor2::zeros(rows, d);
        let mut d_tau = 0.0;

        // reconstruction: d(-loglik)/d(logit) = p - x inside the clamp, 0 outside
        if spec.recon_weight != 0.0 {
            let c = spec.recon_weight * inv_b;
            let mut d_logits = Tensor2::zeros(b, arch.input_dim);
            for ((g, &p), &xv) in d_logits.data_mut().iter_mut().zip(self.raw_probs.data()).zip(x.data()) {
                if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                    *g = c * (p - xv);
                }
            }
            let layers = arch.decoder_layers();
            let d_h = dense_backward(params, arch.output_layer(), &self.dec_h, &d_logits, &mut grads, true)?
                .expect("input gradient requested");
            d_z = trunk_backward(params, &layers, &self.dec_cache, d_h, &mut grads, true)?
                .expect("input gradient requested");
        }

        if spec.beta != 0.0 {
            let c = spec.beta * inv_b;
            match spec.prior {
                PriorKind::HubMixture => {
                    self.mixture_kl_grad(c, &mut d_z, &mut d_mean, &mut d_var, &mut d_tau)?
                }
                PriorKind::StandardNormal => {
                    for i in 0..b {
                        for k in 0..d {
                            let (m, v) = (self.mean.get(i, k), self.var.get(i, k));
                            d_mean.data_mut()[i * d + k] += c * m;
                            d_var.data_mut()[i * d + k] += c * 0.5 * (1.0 - 1.0 / v);
                        }
                    }
                }
            }
        }

        if spec.contrastive_weight != 0.0 {
            self.contrastive_grad(spec.contrastive_weight * inv_b, triplets, &mut d_mean, &mut d_var);
        }

        // z = μ + √v ε
        for i in 0..b {
            for k in 0..d {
                let g = d_z.get(i, k);
                let idx = i * d + k;
                d_mean.data_mut()[idx] += g;
                d_var.data_mut()[idx] += g * self.eps.get(i, k) / (2.0 * self.var.get(i, k).sqrt());
            }
        }

        // v = softplus(a) + floor
        let mut d_var_pre = d_var;
        for (g, &a) in d_var_pre.data_mut().iter_mut().zip(self.var_pre.data()) {
            *g *= sigmoid(a);
        }

        let mut d_h = dense_backward(params, arch.mean_head(), &self.enc_h, &d_mean, &mut grads, true)?
            .expect("input gradient requested");
        let d_h_var = dense_backward(params, arch.var_head(), &self.enc_h, &d_var_pre, &mut grads, true)?
            .expect("input gradient requested");
        d_h.add_assign(&d_h_var)?;
        trunk_backward(params, &arch.encoder_layers(), &self.enc_cache, d_h, &mut grads, false)?;

        grads.get_mut(arch.tau_index()).data_mut()[0] += d_tau;
        Ok((losses, grads))
    }

    fn mixture_kl_grad(
        &self,
        c: f64,
        d_z: &mut Tensor2,
        d_mean: &mut Tensor2,
        d_var: &mut Tensor2,
        d_tau: &mut f64,
    ) -> Result<()> {
        let m = self.n_hubs();
        if m == 0 {
            return Err(Error::EmptyPool);
        }
        let d = self.z.cols();
        let sigma2 = self.tau.exp();
        let log_norm = -(d as f64) * (HALF_LN_2PI + 0.5 * self.tau);
        let mut sq = vec![0.0; m];
        let mut w = vec![0.0; m];
        for i in 0..self.n_data {
            let zi = self.z.row(i);
            // log q(z_i | x_i) as a function of (z, μ, v)
            for k in 0..d {
                let (mu, v) = (self.mean.get(i, k), self.var.get(i, k));
                let diff = zi[k] - mu;
                d_z.data_mut()[i * d + k] -= c * diff / v;
                d_mean.data_mut()[i * d + k] += c * diff / v;
                d_var.data_mut()[i * d + k] += c * (-0.5 / v + 0.5 * diff * diff / (v * v));
            }
            // −logsumexp_j log r_j(z_i)
            for j in 0..m {
                let hub = self.mean.row(self.n_data + j);
                sq[j] = zi.iter().zip(hub).map(|(a, b)| (a - b) * (a - b)).sum();
                w[j] = log_norm - 0.5 * sq[j] / sigma2;
            }
            let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            for wj in w.iter_mut() {
                *wj = (*wj - max).exp();
                norm += *wj;
            }
            for j in 0..m {
                let wj = w[j] / norm;
                if wj == 0.0 {
                    continue;
                }
                let coef = c * wj / sigma2;
                let row = self.n_data + j;
                for k in 0..d {
                    let diff = zi[k] - self.mean.get(row, k);
                    d_z.data_mut()[i * d + k] += coef * diff;
                    d_mean.data_mut()[row * d + k] -= coef * diff;
                }
                *d_tau += c * wj * (0.5 * d as f64 - 0.5 * sq[j] / sigma2);
            }
        }
        Ok(())
    }

    fn contrastive_grad(&self, c: f64, triplets: &[Triplet], d_mean: &mut Tensor2, d_var: &mut Tensor2) {
        let d = self.mean.cols();
        let post = |i: usize| DiagGaussian { mean: self.mean.row(i).to_vec(), var: self.var.row(i).to_vec() };
        let dist = |a: usize, b: usize| wasserstein2_sq_unchecked(&post(a), &post(b)).sqrt();
        // dW/dμ_a = (μ_a − μ_b)/W, dW/dv_a = (√v_a − √v_b)/(2 W √v_a)
        let mut push = |a: usize, b: usize, g: f64, w: f64| {
            if w == 0.0 {
                return;
            }
            for k in 0..d {
                let dm = self.mean.get(a, k) - self.mean.get(b, k);
                d_mean.data_mut()[a * d + k] += g * dm / w;
                d_mean.data_mut()[b * d + k] -= g * dm / w;
                let (sa, sb) = (self.var.get(a, k).sqrt(), self.var.get(b, k).sqrt());
                let ds = sa - sb;
                d_var.data_mut()[a * d + k] += g * ds / (w * 2.0 * sa);
                d_var.data_mut()[b * d + k] -= g * ds / (w * 2.0 * sb);
            }
        };
        for t in triplets {
            let w_ap = dist(t.anchor, t.positive);
            for &n in &t.negatives {
                let w_an = dist(t.anchor, n);
                if w_ap - w_an + 1.0 > 0.0 {
                    push(t.anchor, t.positive, c, w_ap);
                    push(t.anchor, n, -c, w_an);
                }
            }
        }
    }
}

/// Draws reparameterization noise from `rng`, then runs the forward and
/// reverse passes with the given triplets held fixed.
pub fn forward_backward<R: Rng + ?Sized>(
    arch: &Architecture,
    params: &ParamSet,
    x: &Tensor2,
    hubs: Option<&Tensor2>,
    triplets: &[Triplet],
    spec: &LossSpec,
    rng: &mut R,
) -> Result<(LossBreakdown, ParamSet)> {
    let eps = standard_normal(x.rows(), arch.latent_dim, rng);
    let fwd = BatchForward::run(arch, params, x, hubs, eps)?;
    fwd.backward(arch, params, x, triplets, spec)
}
