//! kNN graphs over latent distributions, hubness scores and hub selection.
//!
//! A point's hubness `N_k` is its in-degree in the kNN digraph; the points
//! that list it are its reverse k-nearest neighbors. Hubs are points whose
//! hubness exceeds the batch mean by `λ` population standard deviations.
//! Ties in distance always go to the smaller index.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::distributions::{log_sum_exp, wasserstein2_sq_unchecked, DiagGaussian, Gaussian};
use crate::error::{dim_err, param_err, Result};
use crate::numerics::Tensor2;

/// Default hub threshold multiplier.
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    /// `neighbors[i]` in ascending distance order.
    pub neighbors: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HubRecord {
    pub index: usize,
    pub hubness: usize,
    /// Reverse kNN set, ascending.
    pub rknn: Vec<usize>,
    /// Log-domain good-hub score; `None` until scored.
    pub good_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubPool {
    pub epoch: usize,
    pub hubs: Vec<usize>,
}

impl HubPool {
    pub fn len(&self) -> usize {
        self.hubs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hubs.is_empty()
    }
}

/// Choose `k = round(√B)`, clamped to `[1, B − 1]`.
pub fn knn_k_for_batch(batch: usize) -> usize {
    let k = (batch as f64).sqrt().round() as usize;
    k.clamp(1, batch.saturating_sub(1).max(1))
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Pairwise 2-Wasserstein distance matrix.
pub fn pairwise_wasserstein<G: Gaussian>(dists: &[G]) -> Tensor2 {
    let n = dists.len();
    let mut out = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = wasserstein2_sq_unchecked(&dists[i], &dists[j]).sqrt();
            out.set(i, j, w);
            out.set(j, i, w);
        }
    }
    out
}

/// Builds the exact kNN graph from a square distance matrix.
pub fn build_knn_graph(dists: &Tensor2, k: usize) -> Result<KnnGraph> {
    let n = dists.rows();
    if dists.cols() != n {
        return dim_err(format!("distance matrix is {}x{}", n, dists.cols()));
    }
    if k == 0 || k >= n {
        return param_err(format!("k = {k} must satisfy 1 <= k < n = {n}"));
    }
    let mut neighbors = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        buf.clear();
        buf.extend((0..n).filter(|&j| j != i).map(|j| (dists.get(i, j), j)));
        buf.sort_by(by_distance_then_index);
        buf.truncate(k);
        neighbors.push(buf.iter().map(|&(_, j)| j).collect());
        distances.push(buf.iter().map(|&(d, _)| d).collect());
    }
    Ok(KnnGraph { n, k, neighbors, distances })
}

/// Hubness and reverse-kNN set for every point in the graph.
pub fn hubness_scores(g: &KnnGraph) -> Vec<HubRecord> {
    let mut rknn: Vec<Vec<usize>> = vec![Vec::new(); g.n];
    for (j, list) in g.neighbors.iter().enumerate() {
        for &i in list {
            rknn[i].push(j);
        }
    }
    rknn.into_iter()
        .enumerate()
        .map(|(index, r)| HubRecord { index, hubness: r.len(), rknn: r, good_score: None })
        .collect()
}

/// Population mean and standard deviation.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Keeps records with `N_k > μ + λσ` over the given records.
pub fn select_hubs(records: &[HubRecord], lambda: f64) -> Vec<HubRecord> {
    let (mean, std) = mean_std(records.iter().map(|r| r.hubness as f64));
    let threshold = mean + lambda * std;
    records.iter().filter(|r| r.hubness as f64 > threshold).cloned().collect()
}

/// Hubness z-scores `(N_k − μ)/σ`; all zero when σ = 0.
pub fn hubness_zscores(records: &[HubRecord]) -> Vec<f64> {
    let (mean, std) = mean_std(records.iter().map(|r| r.hubness as f64));
    records
        .iter()
        .map(|r| if std > 0.0 { (r.hubness as f64 - mean) / std } else { 0.0 })
        .collect()
}

/// Scores each hub by how well its reverse neighbors reconstruct it relative
/// to how far they sit from it:
///
/// `G = logsumexp_r(loglik(h, r) / D) − ln Σ_r W(q_r, q_h)`
///
/// `loglik(h, r)` is the decoder log-likelihood of the hub's input given the
/// reverse neighbor's latent sample; dividing by the input dimension `D`
/// keeps the exponentials representable. A zero distance sum yields `+∞`.
pub fn good_hub_scores(
    hubs: &mut [HubRecord],
    posteriors: &[DiagGaussian],
    input_dim: usize,
    mut loglik: impl FnMut(usize, usize) -> f64,
) -> Result<()> {
    if input_dim == 0 {
        return param_err("input dimension must be positive");
    }
    let scale = 1.0 / input_dim as f64;
    for hub in hubs.iter_mut() {
        if hub.rknn.is_empty() {
            return param_err(format!("hub {} has no reverse neighbors", hub.index));
        }
        let q_h = &posteriors[hub.index];
        let dist_sum: f64 = hub
            .rknn
            .iter()
            .map(|&r| wasserstein2_sq_unchecked(&posteriors[r], q_h).sqrt())
            .sum();
        let score = if dist_sum == 0.0 {
            f64::INFINITY
        } else {
            let terms: Vec<f64> = hub.rknn.iter().map(|&r| loglik(hub.index, r) * scale).collect();
            log_sum_exp(&terms) - dist_sum.ln()
        };
        hub.good_score = Some(score);
    }
    Ok(())
}

/// Retention mask for the adaptive good-hub threshold on z-scored scores:
/// keep `z > max(z)/2`.
///
/// `+∞` scores are always kept; `−∞` scores are dropped. When fewer than two
/// finite scores remain, or they all coincide, every finite score is kept.
pub fn good_score_mask(scores: &[f64]) -> Vec<bool> {
    let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    if finite.is_empty() && scores.iter().all(|s| *s == f64::NEG_INFINITY) {
        return vec![true; scores.len()];
    }
    let (mean, std) = mean_std(finite.iter().copied());
    let degenerate = finite.len() < 2 || std == 0.0;
    let max_z = finite.iter().map(|s| (s - mean) / std).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|&s| {
            if s == f64::INFINITY {
                true
            } else if s == f64::NEG_INFINITY || s.is_nan() {
                false
            } else if degenerate {
                true
            } else {
                (s - mean) / std > max_z / 2.0
            }
        })
        .collect()
}

/// Keeps z-scores strictly above half the maximum z-score.
pub fn zscore_threshold_mask(z: &[f64]) -> Vec<bool> {
    let max_z = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    z.iter().map(|&v| v > max_z / 2.0).collect()
}

/// Filters scored hub candidates into a deduplicated pool. `index` must
/// already be a dataset index.
pub fn filter_good_hubs(records: &[HubRecord], epoch: usize) -> HubPool {
    let scores: Vec<f64> = records.iter().map(|r| r.good_score.unwrap_or(f64::NEG_INFINITY)).collect();
    let mask = good_score_mask(&scores);
    let mut seen = HashSet::new();
    let hubs = records
        .iter()
        .zip(mask)
        .filter(|(_, keep)| *keep)
        .map(|(r, _)| r.index)
        .filter(|i| seen.insert(*i))
        .collect();
    HubPool { epoch, hubs }
}

/// Prunes each neighbor list to distances `≤ μ_D + 2σ_D`, where the
/// statistics are taken over every point's k-th neighbor distance.
pub fn adaptive_neighbors(g: &KnnGraph) -> Vec<Vec<(usize, f64)>> {
    let threshold = adaptive_threshold(g);
    g.neighbors
        .iter()
        .zip(&g.distances)
        .map(|(nb, ds)| {
            nb.iter().zip(ds).filter(|(_, &d)| d <= threshold).map(|(&j, &d)| (j, d)).collect()
        })
        .collect()
}

pub fn adaptive_threshold(g: &KnnGraph) -> f64 {
    let (mean, std) = mean_std(g.distances.iter().filter_map(|d| d.last().copied()));
    mean + 2.0 * std
}

/// Fraction of a hub's reverse neighbors whose label differs from the hub's.
pub fn bad_hubness(record: &HubRecord, labels: &[usize]) -> f64 {
    if record.rknn.is_empty() {
        return 0.0;
    }
    let own = labels[record.index];
    let mismatched = record.rknn.iter().filter(|&&r| labels[r] != own).count();
    mismatched as f64 / record.rknn.len() as f64
}
