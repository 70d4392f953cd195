//! Per-epoch construction of the good-hub pool.

use std::collections::HashSet;

use log::debug;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::Serialize;

use super::TrainConfig;
use crate::distributions::bernoulli_loglik_unchecked;
use crate::error::Result;
use crate::hubness::{
    bad_hubness, build_knn_graph, filter_good_hubs, good_hub_scores, hubness_scores, hubness_zscores,
    knn_k_for_batch, pairwise_wasserstein, select_hubs, HubPool, HubRecord,
};
use crate::model::HubVae;
use crate::numerics::Tensor2;

/// Where the final pool came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    GoodHubs,
    /// Selection disabled; every raw hub is kept.
    RawHubs,
    /// Nothing survived filtering, so every raw hub is kept.
    RawHubFallback,
    /// No hubs at all; uniform random training points.
    UniformFallback,
}

/// One hub candidate as seen while building the pool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubDiagnostic {
    pub epoch: usize,
    pub batch: usize,
    pub index: usize,
    pub hubness: usize,
    pub nk_zscore: f64,
    pub good_score: Option<f64>,
    /// Fraction of reverse neighbors with a different true label.
    pub bad_hubness: Option<f64>,
    pub retained: bool,
}

#[derive(Debug, Clone)]
pub struct PoolBuild {
    pub pool: HubPool,
    pub source: PoolSource,
    pub raw_hubs: Vec<usize>,
    pub diagnostics: Vec<HubDiagnostic>,
}

/// Encodes every mini-batch with the current model, finds hubs in each
/// batch's Wasserstein kNN graph, scores them and keeps the good ones.
pub fn build_epoch_pool<R: Rng + ?Sized>(
    model: &HubVae,
    train_x: &Tensor2,
    labels: Option<&[usize]>,
    config: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<PoolBuild> {
    let n = train_x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut candidates: Vec<HubRecord> = Vec::new();
    let mut diagnostics = Vec::new();

    for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
        let x_b = train_x.select_rows(chunk);
        let enc = model.encode(&x_b, rng)?;
        if chunk.len() < 3 {
            continue;
        }
        let dists = pairwise_wasserstein(&enc.posteriors);
        let graph = build_knn_graph(&dists, knn_k_for_batch(chunk.len()))?;
        let records = hubness_scores(&graph);
        let zscores = hubness_zscores(&records);
        let mut hubs = select_hubs(&records, config.lambda);
        if !config.no_selection && !hubs.is_empty() {
            let probs = model.decode(&enc.z)?;
            good_hub_scores(&mut hubs, &enc.posteriors, train_x.cols(), |h, r| {
                bernoulli_loglik_unchecked(probs.row(r), x_b.row(h))
            })?;
        }
        let local_labels: Option<Vec<usize>> = labels.map(|l| chunk.iter().map(|&i| l[i]).collect());
        for mut hub in hubs {
            diagnostics.push(HubDiagnostic {
                epoch,
                batch,
                index: chunk[hub.index],
                hubness: hub.hubness,
                nk_zscore: zscores[hub.index],
                good_score: hub.good_score,
                bad_hubness: local_labels.as_deref().map(|l| bad_hubness(&hub, l)),
                retained: false,
            });
            hub.index = chunk[hub.index];
            hub.rknn.iter_mut().for_each(|r| *r = chunk[*r]);
            candidates.push(hub);
        }
    }

    let mut seen = HashSet::new();
    let raw_hubs: Vec<usize> = candidates.iter().map(|h| h.index).filter(|i| seen.insert(*i)).collect();
    let (mut pool, mut source) = if config.no_selection {
        (HubPool { epoch, hubs: raw_hubs.clone() }, PoolSource::RawHubs)
    } else {
        (filter_good_hubs(&candidates, epoch), PoolSource::GoodHubs)
    };
    if pool.is_empty() && !raw_hubs.is_empty() {
        pool.hubs = raw_hubs.clone();
        source = PoolSource::RawHubFallback;
    }
    if pool.is_empty() {
        let m = config.components.min(n);
        pool.hubs = index::sample(rng, n, m).into_vec();
        source = PoolSource::UniformFallback;
    }
    debug!("epoch {epoch}: {} raw hubs, pool of {} ({source:?})", raw_hubs.len(), pool.len());

    let kept: HashSet<usize> = pool.hubs.iter().copied().collect();
    for d in &mut diagnostics {
        d.retained = kept.contains(&d.index);
    }
    Ok(PoolBuild { pool, source, raw_hubs, diagnostics })
}

/// Samples `m` pool members: without replacement when the pool is large
/// enough, with replacement otherwise.
pub fn sample_hubs<R: Rng + ?Sized>(pool: &HubPool, m: usize, rng: &mut R) -> Vec<usize> {
    if pool.len() >= m {
        index::sample(rng, pool.len(), m).into_iter().map(|i| pool.hubs[i]).collect()
    } else {
        (0..m).map(|_| pool.hubs[rng.random_range(0..pool.len())]).collect()
    }
}

/// Writes diagnostics as CSV with a header row.
pub fn diagnostics_csv(rows: &[HubDiagnostic]) -> String {
    let mut out = String::from("epoch,batch,index,hubness,nk_zscore,good_score,bad_hubness,retained\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.batch,
            r.index,
            r.hubness,
            r.nk_zscore,
            opt(r.good_score),
            opt(r.bad_hubness),
            r.retained as u8
        ));
    }
    out
}
