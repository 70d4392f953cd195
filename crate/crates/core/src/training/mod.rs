//! Epoch orchestration: pool construction, mini-batch optimization,
//! validation and early stopping.
//!
//! Each epoch first rebuilds the hub pool from the model as it stood at the
//! end of the previous epoch, then trains over shuffled mini-batches with
//! `m` hubs drawn from that pool per batch. Validation uses the whole pool
//! as the prior mixture and leaves out the contrastive term.

mod config;
mod pool;
mod schedule;
mod triplets;

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clustering::hub_seeded_labeling;
use crate::dataio::binarize;
use crate::error::{Error, Result};
use crate::hubness::{adaptive_neighbors, build_knn_graph, knn_k_for_batch, pairwise_wasserstein, HubPool};
use crate::model::{
    loss_kl_mixture, loss_kl_standard, loss_recon, standard_normal, Architecture, BatchForward, HubVae,
    LossBreakdown, LossSpec,
};
use crate::numerics::{adam_step, AdamState, Tensor2};

pub use config::TrainConfig;
pub use pool::{build_epoch_pool, diagnostics_csv, sample_hubs, HubDiagnostic, PoolBuild, PoolSource};
pub use schedule::{beta_at, BetaSchedule, EarlyStopping};
pub use triplets::{select_triplets, Triplet};

/// Separates the validation noise stream from the training stream.
const VALIDATION_STREAM: u64 = 0x5f3a_91c7_0d2e_4b68;
const EVAL_BINARIZE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn beta_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    beta_at(config.beta_schedule, epoch, config.max_epochs, config.beta_min)
}

fn loss_spec(config: &TrainConfig, beta: f64) -> LossSpec {
    if config.baseline_gaussian {
        LossSpec::gaussian_vae(beta)
    } else if config.no_contrastive {
        LossSpec::no_contrastive(beta)
    } else {
        LossSpec::hub_vae(beta)
    }
}

/// Training and validation matrices (values in `[0, 1]`).
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: Tensor2,
    pub val: Tensor2,
    /// Used only for hub diagnostics.
    pub train_labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EpochStats {
    pub losses: LossBreakdown,
    pub batches: usize,
    pub triplets: usize,
    pub anchors_with_triplets: usize,
}

/// Contrastive triplets for a batch: hub-seeded labels, then the pruned
/// Wasserstein kNN neighborhood of every point.
pub fn batch_triplets(fwd: &BatchForward, clusters: usize, kmeans_seed: u64) -> Result<Vec<Triplet>> {
    let b = fwd.n_data();
    if b < 3 {
        return Ok(Vec::new());
    }
    let posteriors = fwd.posteriors();
    let prior = fwd.hub_prior();
    let labeling = hub_seeded_labeling(&prior.components, &posteriors, clusters, kmeans_seed)?;
    let graph = build_knn_graph(&pairwise_wasserstein(&posteriors), knn_k_for_batch(b))?;
    Ok(select_triplets(&adaptive_neighbors(&graph), &labeling.labels))
}

/// One pass over the training data with a fixed pool.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut HubVae,
    adam: &mut AdamState,
    train_x: &Tensor2,
    pool: Option<&HubPool>,
    config: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<EpochStats> {
    let beta = beta_schedule(epoch, config);
    let spec = loss_spec(config, beta);
    let n = train_x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
    let mut stats = EpochStats::default();
    let mut weighted = LossBreakdown { beta, ..Default::default() };

    for chunk in order.chunks(config.batch_size) {
        let x_b = train_x.select_rows(chunk);
        let hub_x = if config.baseline_gaussian {
            None
        } else {
            let pool = pool.filter(|p| !p.is_empty()).ok_or(Error::EmptyPool)?;
            Some(train_x.select_rows(&sample_hubs(pool, config.components, rng)))
        };
        let eps = standard_normal(chunk.len(), model.arch.latent_dim, rng);
        let fwd = BatchForward::run(&model.arch, &model.params, &x_b, hub_x.as_ref(), eps)?;
        let triplets = if config.uses_contrastive() {
            let k = config.clusters.expect("validated");
            batch_triplets(&fwd, k, rng.random())?
        } else {
            Vec::new()
        };
        let (losses, mut grads) = fwd.backward(&model.arch, &model.params, &x_b, &triplets, &spec)?;
        if !config.learn_tau {
            grads.get_mut(model.arch.tau_index()).fill(0.0);
        }
        adam_step(&mut model.params, grads, adam)?;

        let w = chunk.len() as f64;
        weighted.recon += w * losses.recon;
        weighted.kl += w * losses.kl;
        weighted.contrastive += w * losses.contrastive;
        weighted.total += w * losses.total;
        stats.batches += 1;
        stats.anchors_with_triplets += triplets.len();
        stats.triplets += triplets.iter().map(|t| t.negatives.len()).sum::<usize>();
    }
    if n > 0 {
        let inv = 1.0 / n as f64;
        weighted.recon *= inv;
        weighted.kl *= inv;
        weighted.contrastive *= inv;
        weighted.total *= inv;
    }
    stats.losses = weighted;
    Ok(stats)
}

/// Reconstruction plus `β`·KL against the mixture of every pool hub (or
/// `N(0, I)` for the Gaussian baseline), averaged over validation rows.
pub fn validation_loss<R: Rng + ?Sized>(
    model: &HubVae,
    x_val: &Tensor2,
    pool_inputs: Option<&Tensor2>,
    beta: f64,
    rng: &mut R,
) -> Result<LossBreakdown> {
    let enc = model.encode(x_val, rng)?;
    let probs = model.decode(&enc.z)?;
    let recon = loss_recon(x_val, &probs)?;
    let kl = match pool_inputs {
        Some(hubs) => {
            if hubs.rows() == 0 {
                return Err(Error::EmptyPool);
            }
            loss_kl_mixture(&enc.posteriors, &enc.z, &model.hub_prior(hubs)?)?
        }
        None => loss_kl_standard(&enc.posteriors)?,
    };
    let total = recon + beta * kl;
    if !total.is_finite() {
        return Err(Error::NonFinite { term: "validation", value: total });
    }
    Ok(LossBreakdown { recon, kl, contrastive: 0.0, beta, total })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub beta: f64,
    pub recon: f64,
    pub kl: f64,
    pub contrastive: f64,
    pub total: f64,
    pub triplets: usize,
    pub raw_hubs: usize,
    pub pool_size: usize,
    pub pool_source: Option<PoolSource>,
    pub val_loss: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.epochs.last().map(|r| r.best_epoch)
    }
}

/// Handed to the validation callback at the end of every epoch.
pub struct ValidationContext<'a> {
    pub epoch: usize,
    pub beta: f64,
    pub model: &'a HubVae,
    pub pool: Option<&'a HubPool>,
    pub pool_inputs: Option<&'a Tensor2>,
    pub val: &'a Tensor2,
    pub rng: &'a mut ChaCha8Rng,
}

impl ValidationContext<'_> {
    pub fn validation_loss(&mut self) -> Result<f64> {
        Ok(validation_loss(self.model, self.val, self.pool_inputs, self.beta, self.rng)?.total)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Model at the epoch with the lowest validation loss.
    pub model: HubVae,
    pub pool: Option<HubPool>,
    pub best_epoch: usize,
    pub log: TrainLog,
    /// Hub candidates of every epoch.
    pub hub_diagnostics: Vec<Vec<HubDiagnostic>>,
}

pub fn fit(data: &TrainingData, config: &TrainConfig) -> Result<FitResult> {
    fit_with_validation(data, config, |ctx| ctx.validation_loss())
}

/// [`fit`] with a caller-supplied validation loss.
pub fn fit_with_validation<F>(data: &TrainingData, config: &TrainConfig, mut validate: F) -> Result<FitResult>
where
    F: FnMut(&mut ValidationContext<'_>) -> Result<f64>,
{
    config.validate()?;
    if data.train.rows() == 0 || data.val.rows() == 0 {
        return Err(Error::Parameter("training and validation splits must be nonempty".into()));
    }
    let arch = Architecture::new(data.train.cols(), config.hidden.clone(), config.latent_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed ^ VALIDATION_STREAM);
    let mut model = HubVae::new(arch, config.prior_var, &mut rng);
    let mut adam = AdamState::new(&model.params, config.adam());
    let val: Cow<'_, Tensor2> = if config.dynamic_binarization {
        Cow::Owned(binarize(&data.val, &mut ChaCha8Rng::seed_from_u64(config.seed ^ EVAL_BINARIZE_STREAM)))
    } else {
        Cow::Borrowed(&data.val)
    };

    let mut stopper = EarlyStopping::new(config.lookahead);
    let mut log = TrainLog::default();
    let mut diagnostics = Vec::new();
    let mut best: Option<(HubVae, Option<HubPool>, usize)> = None;

    for epoch in 0..config.max_epochs {
        let train: Cow<'_, Tensor2> = if config.dynamic_binarization {
            Cow::Owned(binarize(&data.train, &mut rng))
        } else {
            Cow::Borrowed(&data.train)
        };
        let build = if config.baseline_gaussian {
            None
        } else {
            Some(build_epoch_pool(&model, &train, data.train_labels.as_deref(), config, epoch, &mut rng)?)
        };
        let pool = build.as_ref().map(|b| &b.pool);
        let stats = train_epoch(&mut model, &mut adam, &train, pool, config, epoch, &mut rng)?;

        let beta = beta_schedule(epoch, config);
        let pool_inputs = pool.map(|p| train.select_rows(&p.hubs));
        let val_loss = validate(&mut ValidationContext {
            epoch,
            beta,
            model: &model,
            pool,
            pool_inputs: pool_inputs.as_ref(),
            val: &val,
            rng: &mut val_rng,
        })?;
        let stop = stopper.observe(epoch, val_loss);
        if stopper.is_best(epoch) {
            best = Some((model.clone(), pool.cloned(), epoch));
        }
        log.epochs.push(EpochRecord {
            epoch,
            beta,
            recon: stats.losses.recon,
            kl: stats.losses.kl,
            contrastive: stats.losses.contrastive,
            total: stats.losses.total,
            triplets: stats.triplets,
            raw_hubs: build.as_ref().map_or(0, |b| b.raw_hubs.len()),
            pool_size: pool.map_or(0, HubPool::len),
            pool_source: build.as_ref().map(|b| b.source),
            val_loss,
            best_epoch: stopper.best_epoch().expect("observed"),
        });
        log::info!(
            "epoch {epoch}: total {:.4} recon {:.4} kl {:.4} contrastive {:.4} val {:.4}",
            stats.losses.total,
            stats.losses.recon,
            stats.losses.kl,
            stats.losses.contrastive,
            val_loss
        );
        diagnostics.push(build.map(|b| b.diagnostics).unwrap_or_default());
        if stop {
            break;
        }
    }

    let (model, pool, best_epoch) = best.ok_or_else(|| Error::Parameter("max_epochs must be positive".into()))?;
    Ok(FitResult { model, pool, best_epoch, log, hub_diagnostics: diagnostics })
}
