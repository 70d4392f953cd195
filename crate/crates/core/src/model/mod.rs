//! The Hub-VAE network.
//!
//! Encoder `D → hidden… → (μ, softplus + 1e-6)` shared between data points
//! and hub inputs; decoder `d → hidden (reversed)… → D` with clamped logistic
//! outputs. The hub prior is an equally weighted mixture of isotropic
//! Gaussians centred at the encoded hub means, with one shared variance
//! `exp(τ)`.

mod loss;
mod network;
mod pass;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::distributions::{clamp_prob, DiagGaussian, IsoGaussian};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{ParamSet, Tensor2};

pub use loss::{
    loss_contrastive, loss_kl_mixture, loss_kl_standard, loss_recon, HubPriorBatch, LossBreakdown,
    LossSpec, PriorKind,
};
pub use pass::{forward_backward, BatchForward};

use network::{dense, sigmoid, softplus, trunk_forward, Layer};

/// Floor added to the softplus variance head.
pub const VAR_FLOOR: f64 = 1e-6;

pub const TAU_NAME: &str = "tau";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, latent_dim: usize) -> Self {
        Self { input_dim, hidden, latent_dim }
    }

    fn n_hidden(&self) -> usize {
        self.hidden.len()
    }

    pub(crate) fn encoder_layers(&self) -> Vec<Layer> {
        (0..self.n_hidden()).map(|i| (2 * i, 2 * i + 1)).collect()
    }

    pub(crate) fn mean_head(&self) -> Layer {
        let l = self.n_hidden();
        (2 * l, 2 * l + 1)
    }

    pub(crate) fn var_head(&self) -> Layer {
        let l = self.n_hidden();
        (2 * l + 2, 2 * l + 3)
    }

    pub(crate) fn decoder_layers(&self) -> Vec<Layer> {
        let base = 2 * self.n_hidden() + 4;
        (0..self.n_hidden()).map(|i| (base + 2 * i, base + 2 * i + 1)).collect()
    }

    pub(crate) fn output_layer(&self) -> Layer {
        let l = self.n_hidden();
        (4 * l + 4, 4 * l + 5)
    }

    pub(crate) fn tau_index(&self) -> usize {
        4 * self.n_hidden() + 6
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w
    }

    fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim];
        w.extend(self.hidden.iter().rev());
        w
    }

    /// Names and shapes of every parameter, in storage order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut layer = |name: String, fan_in: usize, fan_out: usize| {
            out.push((format!("{name}.w"), fan_in, fan_out));
            out.push((format!("{name}.b"), 1, fan_out));
        };
        let enc = self.encoder_widths();
        for i in 0..self.n_hidden() {
            layer(format!("enc.{i}"), enc[i], enc[i + 1]);
        }
        let top = *enc.last().expect("nonempty");
        layer("enc.mu".into(), top, self.latent_dim);
        layer("enc.var".into(), top, self.latent_dim);
        let dec = self.decoder_widths();
        for i in 0..self.n_hidden() {
            layer(format!("dec.{i}"), dec[i], dec[i + 1]);
        }
        let top = *dec.last().expect("nonempty");
        layer("dec.out".into(), top, self.input_dim);
        out.push((TAU_NAME.to_string(), 1, 1));
        out
    }

    /// Glorot-uniform weights, zero biases, `τ = ln(prior_var)`.
    pub fn init_params<R: Rng + ?Sized>(&self, prior_var: f64, rng: &mut R) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, rows, cols) in self.layout() {
            let t = if name == TAU_NAME {
                Tensor2::scalar(prior_var.ln())
            } else if name.ends_with(".w") {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
                    .expect("shape")
            } else {
                Tensor2::zeros(rows, cols)
            };
            p.push(name, t);
        }
        p
    }

    /// Checks that a parameter set has exactly this architecture's layout.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let layout = self.layout();
        let matches = layout.len() == params.len()
            && layout
                .iter()
                .zip(params.iter())
                .all(|((n, r, c), (pn, t))| n == pn && t.shape() == (*r, *c));
        if matches {
            Ok(())
        } else {
            dim_err("parameter set does not match the architecture")
        }
    }
}

/// Posterior of every input row plus one reparameterized sample per row.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub posteriors: Vec<DiagGaussian>,
    pub eps: Tensor2,
    pub z: Tensor2,
}

/// Network parameters plus the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct HubVae {
    pub arch: Architecture,
    pub params: ParamSet,
}

impl HubVae {
    pub fn new<R: Rng + ?Sized>(arch: Architecture, prior_var: f64, rng: &mut R) -> Self {
        let params = arch.init_params(prior_var, rng);
        Self { arch, params }
    }

    pub fn from_params(arch: Architecture, params: ParamSet) -> Result<Self> {
        arch.check_params(&params)?;
        Ok(Self { arch, params })
    }

    pub fn tau(&self) -> f64 {
        self.params.get(self.arch.tau_index()).data()[0]
    }

    pub fn set_tau(&mut self, tau: f64) {
        let i = self.arch.tau_index();
        self.params.get_mut(i).data_mut()[0] = tau;
    }

    /// Shared hub-prior variance `σ² = exp(τ)`.
    pub fn prior_var(&self) -> f64 {
        self.tau().exp()
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.arch.input_dim {
            return dim_err(format!("input has {} columns, model expects {}", x.cols(), self.arch.input_dim));
        }
        Ok(())
    }

    /// Posterior means and variances for every row.
    pub fn encode_posteriors(&self, x: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        self.check_input(x)?;
        let (h, _) = trunk_forward(&self.params, &self.arch.encoder_layers(), x)?;
        let mean = dense(&self.params, self.arch.mean_head(), &h)?;
        let var = dense(&self.params, self.arch.var_head(), &h)?.map(|a| softplus(a) + VAR_FLOOR);
        if !mean.all_finite() || !var.all_finite() {
            return Err(Error::NonFinite { term: "encoder", value: f64::NAN });
        }
        Ok((mean, var))
    }

    /// Encodes with explicit reparameterization noise (`B × d`).
    pub fn encode_with_eps(&self, x: &Tensor2, eps: Tensor2) -> Result<EncoderOutput> {
        let (mean, var) = self.encode_posteriors(x)?;
        if eps.shape() != mean.shape() {
            return dim_err(format!("noise {:?} for latents {:?}", eps.shape(), mean.shape()));
        }
        let mut z = mean.clone();
        for ((zv, &v), &e) in z.data_mut().iter_mut().zip(var.data()).zip(eps.data()) {
            *zv += v.sqrt() * e;
        }
        let posteriors = mean
            .row_iter()
            .zip(var.row_iter())
            .map(|(m, v)| DiagGaussian { mean: m.to_vec(), var: v.to_vec() })
            .collect();
        Ok(EncoderOutput { posteriors, eps, z })
    }

    pub fn encode<R: Rng + ?Sized>(&self, x: &Tensor2, rng: &mut R) -> Result<EncoderOutput> {
        let eps = standard_normal(x.rows(), self.arch.latent_dim, rng);
        self.encode_with_eps(x, eps)
    }

    /// Clamped Bernoulli probabilities for each latent row.
    pub fn decode(&self, z: &Tensor2) -> Result<Tensor2> {
        if z.cols() != self.arch.latent_dim {
            return dim_err(format!("latent has {} columns, model expects {}", z.cols(), self.arch.latent_dim));
        }
        let (h, _) = trunk_forward(&self.params, &self.arch.decoder_layers(), z)?;
        Ok(dense(&self.params, self.arch.output_layer(), &h)?.map(|a| clamp_prob(sigmoid(a))))
    }

    /// Hub prior components for the given hub inputs.
    pub fn hub_prior(&self, hub_inputs: &Tensor2) -> Result<HubPriorBatch> {
        let (mean, _) = self.encode_posteriors(hub_inputs)?;
        let var = self.prior_var();
        let components = mean.row_iter().map(|m| IsoGaussian { mean: m.to_vec(), var }).collect();
        Ok(HubPriorBatch { components })
    }

    /// Samples `count` latents from the hub's prior component and decodes them.
    pub fn generate<R: Rng + ?Sized>(&self, hub_input: &[f64], count: usize, rng: &mut R) -> Result<Generated> {
        let x = Tensor2::from_vec(1, hub_input.len(), hub_input.to_vec())?;
        let prior = self.hub_prior(&x)?;
        let comp = &prior.components[0];
        let sd = comp.var.sqrt();
        let d = self.arch.latent_dim;
        let mut z = Tensor2::zeros(count, d);
        for r in 0..count {
            for (c, m) in comp.mean.iter().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                z.set(r, c, m + sd * e);
            }
        }
        let probs = self.decode(&z)?;
        let mut samples = Tensor2::zeros(count, self.arch.input_dim);
        for (s, &p) in samples.data_mut().iter_mut().zip(probs.data()) {
            let b = Bernoulli::new(p).expect("clamped probability");
            *s = if b.sample(rng) { 1.0 } else { 0.0 };
        }
        Ok(Generated { latents: z, probs, samples })
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub latents: Tensor2,
    pub probs: Tensor2,
    pub samples: Tensor2,
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor2::from_vec(rows, cols, data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> HubVae {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        HubVae::new(Architecture::new(6, vec![5, 4], 2), 1.0, &mut rng)
    }

    fn zero_weights(m: &mut HubVae, prefix: &str) {
        let names: Vec<String> = m.params.names().to_vec();
        for (i, n) in names.iter().enumerate() {
            if n.starts_with(prefix) && n.ends_with(".w") {
                m.params.get_mut(i).fill(0.0);
            }
        }
    }

    #[test]
    fn param_layout() {
        let m = small();
        let names: Vec<&str> = m.params.names().iter().map(String::as_str).collect();
        assert_eq!(
            names,
            [
                "enc.0.w", "enc.0.b", "enc.1.w", "enc.1.b", "enc.mu.w", "enc.mu.b", "enc.var.w",
                "enc.var.b", "dec.0.w", "dec.0.b", "dec.1.w", "dec.1.b", "dec.out.w", "dec.out.b", "tau"
            ]
        );
        assert_eq!(m.params.by_name("dec.0.w").unwrap().shape(), (2, 4));
        assert_eq!(m.params.by_name("dec.out.w").unwrap().shape(), (5, 6));
        assert_eq!(m.tau(), 0.0);
        assert!(m.arch.check_params(&m.params).is_ok());
    }

    #[test]
    fn zero_encoder_gives_bias_posteriors() {
        let mut m = small();
        zero_weights(&mut m, "enc");
        let mb = m.params.index_of("enc.mu.b").unwrap();
        m.params.get_mut(mb).data_mut().copy_from_slice(&[0.25, -0.5]);
        let x = Tensor2::from_rows(&[vec![0.1; 6], vec![0.9; 6], vec![0.0; 6]]).unwrap();
        let (mean, var) = m.encode_posteriors(&x).unwrap();
        for r in 0..3 {
            assert_eq!(mean.row(r), &[0.25, -0.5]);
            assert_eq!(var.row(r), var.row(0));
        }
    }

    #[test]
    fn zero_noise_sample_is_mean() {
        let m = small();
        let x = Tensor2::from_rows(&[vec![0.3; 6], vec![0.7; 6]]).unwrap();
        let out = m.encode_with_eps(&x, Tensor2::zeros(2, 2)).unwrap();
        let (mean, _) = m.encode_posteriors(&x).unwrap();
        assert_eq!(out.z, mean);
    }

    #[test]
    fn zero_decoder_outputs_logistic_bias() {
        let mut m = small();
        zero_weights(&mut m, "dec");
        let ob = m.params.index_of("dec.out.b").unwrap();
        m.params.get_mut(ob).data_mut().copy_from_slice(&[0.0, 1.0, -1.0, 2.0, 30.0, -30.0]);
        let z = Tensor2::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.5], vec![3.0, 3.0]]).unwrap();
        let p = m.decode(&z).unwrap();
        assert_eq!(p.shape(), (3, 6));
        let expected = [0.5, sigmoid(1.0), sigmoid(-1.0), sigmoid(2.0), 1.0 - 1e-6, 1e-6];
        for r in 0..3 {
            for c in 0..6 {
                assert!((p.get(r, c) - expected[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_prior_generations_collapse() {
        let mut m = small();
        m.set_tau(-1000.0);
        let hub = vec![0.2, 0.4, 0.6, 0.8, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = m.generate(&hub, 5, &mut rng).unwrap();
        let (mean, _) = m.encode_posteriors(&Tensor2::from_vec(1, 6, hub).unwrap()).unwrap();
        let at_mean = m.decode(&mean).unwrap();
        for r in 0..5 {
            assert_eq!(g.probs.row(r), at_mean.row(0));
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let m = small();
        let hub = vec![0.5; 6];
        let a = m.generate(&hub, 4, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = m.generate(&hub, 4, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn shared_encoder_moves_hubs_and_data() {
        let m = small();
        let x = Tensor2::from_rows(&[vec![0.3, 0.1, 0.9, 0.2, 0.5, 0.5]]).unwrap();
        let before_prior = m.hub_prior(&x).unwrap();
        let (before_mean, _) = m.encode_posteriors(&x).unwrap();
        let mut moved = m.clone();
        let i = moved.params.index_of("enc.0.w").unwrap();
        moved.params.get_mut(i).data_mut().iter_mut().for_each(|v| *v += 0.05);
        let after_prior = moved.hub_prior(&x).unwrap();
        let (after_mean, _) = moved.encode_posteriors(&x).unwrap();
        assert_ne!(before_prior.components[0].mean, after_prior.components[0].mean);
        assert_ne!(before_mean, after_mean);
        assert_eq!(after_prior.components[0].mean, after_mean.row(0));
    }
}
