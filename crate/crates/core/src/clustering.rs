//! k-means, hub-seeded labeling and unsupervised evaluation metrics.

use std::collections::HashMap;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::distributions::{wasserstein2_sq_unchecked, DiagGaussian, IsoGaussian};
use crate::error::{dim_err, param_err, Result};
use crate::numerics::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Hub indices the labeling was seeded from, when hub-seeded.
    pub seeds: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iters: 100, restarts: 1, seed }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labeling: ClusterLabeling,
    pub centroids: Tensor2,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Tensor2) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: &Tensor2, k: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let n = points.rows();
    let mut centroids = Tensor2::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn lloyd(points: &Tensor2, mut centroids: Tensor2, max_iters: usize) -> KMeansFit {
    let (n, dim, k) = (points.rows(), points.cols(), centroids.rows());
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        for i in 0..n {
            let (c, d) = nearest(points.row(i), &centroids);
            inertia += d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed || iterations >= max_iters {
            break;
        }
        iterations += 1;

        let mut sums = Tensor2::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        // empty clusters take the point farthest from its own centroid
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = (usize::MAX, -1.0);
                for i in (0..n).filter(|&i| !taken[i]) {
                    let d = sq_dist(points.row(i), centroids.row(labels[i]));
                    if d > far.1 {
                        far = (i, d);
                    }
                }
                if far.0 == usize::MAX {
                    continue;
                }
                taken[far.0] = true;
                let row = points.row(far.0).to_vec();
                centroids.row_mut(c).copy_from_slice(&row);
            }
        }
    }
    let inertia = *trace.last().unwrap_or(&0.0);
    KMeansFit {
        labeling: ClusterLabeling { labels, k, seeds: None },
        centroids,
        inertia,
        inertia_trace: trace,
        iterations,
    }
}

/// Lloyd's algorithm with k-means++ initialization; best of `restarts` by inertia.
pub fn kmeans(points: &Tensor2, opts: KMeansOptions) -> Result<KMeansFit> {
    let n = points.rows();
    if opts.k == 0 {
        return param_err("k-means needs at least one cluster");
    }
    if opts.k > n {
        return param_err(format!("k = {} exceeds the {n} points", opts.k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..opts.restarts.max(1) {
        let init = kmeans_plus_plus(points, opts.k, &mut rng);
        let fit = lloyd(points, init, opts.max_iters);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Clusters the hub means with k-means, then gives every data point the
/// label of its 2-Wasserstein-nearest hub (smaller hub index on ties).
///
/// With fewer than `k` hubs, falls back to k-means over the data posterior
/// means.
pub fn hub_seeded_labeling(
    hubs: &[IsoGaussian],
    data: &[DiagGaussian],
    k: usize,
    seed: u64,
) -> Result<ClusterLabeling> {
    if hubs.len() < k {
        debug!("{} hubs for {k} clusters, clustering data posteriors instead", hubs.len());
        let means = Tensor2::from_rows(&data.iter().map(|p| p.mean.clone()).collect::<Vec<_>>())?;
        return Ok(kmeans(&means, KMeansOptions::new(k, seed))?.labeling);
    }
    let dim = hubs[0].mean.len();
    if hubs.iter().any(|h| h.mean.len() != dim) || data.iter().any(|p| p.mean.len() != dim) {
        return dim_err("hub and data latents differ in dimension");
    }
    let hub_means = Tensor2::from_rows(&hubs.iter().map(|h| h.mean.clone()).collect::<Vec<_>>())?;
    let hub_labels = kmeans(&hub_means, KMeansOptions::new(k, seed))?.labeling.labels;
    let labels = data
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, h) in hubs.iter().enumerate() {
                let d = wasserstein2_sq_unchecked(p, h);
                if d < best.1 {
                    best = (j, d);
                }
            }
            hub_labels[best.0]
        })
        .collect();
    Ok(ClusterLabeling { labels, k, seeds: Some((0..hubs.len()).collect()) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and their harmonic mean.
pub fn v_measure(pred: &[usize], truth: &[usize]) -> Result<VMeasure> {
    if pred.len() != truth.len() {
        return dim_err(format!("{} predictions for {} labels", pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Ok(VMeasure { homogeneity: 1.0, completeness: 1.0, v_measure: 1.0 });
    }
    let n = pred.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut by_pred: HashMap<usize, usize> = HashMap::new();
    let mut by_truth: HashMap<usize, usize> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_default() += 1;
        *by_pred.entry(p).or_default() += 1;
        *by_truth.entry(t).or_default() += 1;
    }
    let h_truth = entropy(by_truth.values().copied(), n);
    let h_pred = entropy(by_pred.values().copied(), n);
    // H(C|P) = -Σ n_pc/n ln(n_pc/n_p)
    let mut h_truth_given_pred = 0.0;
    let mut h_pred_given_truth = 0.0;
    for (&(p, t), &c) in &joint {
        let c = c as f64;
        h_truth_given_pred -= c / n * (c / by_pred[&p] as f64).ln();
        h_pred_given_truth -= c / n * (c / by_truth[&t] as f64).ln();
    }
    let homogeneity = if h_truth == 0.0 { 1.0 } else { 1.0 - h_truth_given_pred / h_truth };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - h_pred_given_truth / h_pred };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    Ok(VMeasure { homogeneity, completeness, v_measure: v })
}

/// Mean percentage of each point's k Euclidean nearest neighbors sharing its label.
pub fn knn_purity(embeddings: &Tensor2, truth: &[usize], k: usize) -> Result<f64> {
    let n = embeddings.rows();
    if truth.len() != n {
        return dim_err(format!("{n} embeddings for {} labels", truth.len()));
    }
    if k == 0 || k >= n {
        return param_err(format!("k = {k} must satisfy 1 <= k < n = {n}"));
    }
    let mut total = 0.0;
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        buf.clear();
        buf.extend(
            (0..n).filter(|&j| j != i).map(|j| (sq_dist(embeddings.row(i), embeddings.row(j)), j)),
        );
        buf.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let same = buf[..k].iter().filter(|&&(_, j)| truth[j] == truth[i]).count();
        total += same as f64 / k as f64;
    }
    Ok(100.0 * total / n as f64)
}

pub const EVAL_RUNS: usize = 10;
pub const EVAL_RESTARTS: usize = 10;

/// Clustering quality of a set of embeddings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub v_measure_mean: f64,
    /// Population std over the runs.
    pub v_measure_std: f64,
    pub v_measure_runs: Vec<f64>,
    pub knn_purity: f64,
    pub k_used: usize,
    pub clusters: usize,
    pub seed: u64,
    pub n_test: usize,
}

/// Runs [`EVAL_RUNS`] k-means fits (seeds `seed`, `seed + 1`, ...) with
/// [`EVAL_RESTARTS`] restarts each and KNN purity with `k = round(√n)`.
pub fn evaluate_embeddings(embeddings: &Tensor2, truth: &[usize], clusters: usize, seed: u64) -> Result<EvalReport> {
    let n = embeddings.rows();
    if n < 2 {
        return param_err(format!("need at least two embeddings, got {n}"));
    }
    let mut runs = Vec::with_capacity(EVAL_RUNS);
    for run in 0..EVAL_RUNS {
        let opts = KMeansOptions::new(clusters, seed.wrapping_add(run as u64)).restarts(EVAL_RESTARTS);
        let fit = kmeans(embeddings, opts)?;
        runs.push(v_measure(&fit.labeling.labels, truth)?.v_measure);
    }
    let mean = runs.iter().sum::<f64>() / runs.len() as f64;
    let std = (runs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / runs.len() as f64).sqrt();
    let k_used = ((n as f64).sqrt().round() as usize).clamp(1, n - 1);
    Ok(EvalReport {
        v_measure_mean: mean,
        v_measure_std: std,
        v_measure_runs: runs,
        knn_purity: knn_purity(embeddings, truth, k_used)?,
        k_used,
        clusters,
        seed,
        n_test: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 2]], per: usize, radius: f64, seed: u64) -> (Tensor2, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                let r = radius * rng.random::<f64>().sqrt();
                let a = rng.random::<f64>() * std::f64::consts::TAU;
                rows.push(vec![center[0] + r * a.cos(), center[1] + r * a.sin()]);
                labels.push(c);
            }
        }
        (Tensor2::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn single_cluster() {
        let (pts, _) = blobs(&[[0.0, 0.0], [5.0, 5.0]], 10, 1.0, 1);
        let fit = kmeans(&pts, KMeansOptions::new(1, 3)).unwrap();
        assert!(fit.labeling.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn one_cluster_per_point() {
        let pts = Tensor2::from_rows(&[vec![0.0, 0.0], vec![1.0, 3.0], vec![-2.0, 0.5], vec![4.0, 4.0]]).unwrap();
        let fit = kmeans(&pts, KMeansOptions::new(4, 11)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut l = fit.labeling.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_above_n_rejected() {
        assert!(kmeans(&Tensor2::zeros(2, 2), KMeansOptions::new(3, 0)).is_err());
    }

    #[test]
    fn separated_blobs_recovered() {
        let (pts, truth) = blobs(&[[0.0, 0.0], [10.0, 10.0]], 25, 0.99, 7);
        for seed in 0..5 {
            let fit = kmeans(&pts, KMeansOptions::new(2, seed)).unwrap();
            assert_eq!(v_measure(&fit.labeling.labels, &truth).unwrap().v_measure, 1.0);
        }
    }

    #[test]
    fn inertia_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| normal.sample(&mut rng)).collect()).collect();
        let pts = Tensor2::from_rows(&rows).unwrap();
        for seed in 0..10 {
            let fit = kmeans(&pts, KMeansOptions::new(6, seed)).unwrap();
            for w in fit.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.inertia_trace);
            }
        }
    }

    #[test]
    fn v_measure_examples() {
        let v = v_measure(&[2, 2, 0, 0, 1], &[0, 0, 1, 1, 2]).unwrap();
        assert!((v.v_measure - 1.0).abs() < 1e-12);
        let v = v_measure(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!(v.homogeneity, 0.0);
        assert_eq!(v.v_measure, 0.0);
        let v = v_measure(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert!((v.homogeneity - 0.311_278_124_459_132_8).abs() < 1e-12);
        assert!((v.completeness - 0.383_688_546_596_344_3).abs() < 1e-12);
        assert!((v.v_measure - 0.3437).abs() < 1e-4);
        assert!(v_measure(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn purity_examples() {
        let pts = Tensor2::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        assert_eq!(knn_purity(&pts, &[3; 10], 3).unwrap(), 100.0);
        let alternating: Vec<usize> = (0..10).map(|i| i % 2).collect();
        assert_eq!(knn_purity(&pts, &alternating, 1).unwrap(), 0.0);
        let (blob_pts, truth) = blobs(&[[0.0, 0.0], [50.0, 50.0]], 12, 1.0, 2);
        assert_eq!(knn_purity(&blob_pts, &truth, 5).unwrap(), 100.0);
        assert!(knn_purity(&pts, &alternating, 10).is_err());
    }

    #[test]
    fn hub_seeded_voronoi() {
        let hubs = vec![
            IsoGaussian { mean: vec![0.0, 0.0], var: 0.5 },
            IsoGaussian { mean: vec![10.0, 0.0], var: 0.5 },
            IsoGaussian { mean: vec![0.0, 10.0], var: 0.5 },
        ];
        let (pts, truth) = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 20, 2.0, 9);
        let data: Vec<DiagGaussian> =
            pts.row_iter().map(|r| DiagGaussian { mean: r.to_vec(), var: vec![0.3, 0.7] }).collect();
        let lab = hub_seeded_labeling(&hubs, &data, 3, 4).unwrap();
        assert_eq!(v_measure(&lab.labels, &truth).unwrap().v_measure, 1.0);
        assert_eq!(lab.seeds, Some(vec![0, 1, 2]));
    }

    #[test]
    fn hub_seeded_tie_prefers_lower_hub() {
        let hubs = vec![
            IsoGaussian { mean: vec![-1.0], var: 1.0 },
            IsoGaussian { mean: vec![1.0], var: 1.0 },
        ];
        let data = vec![DiagGaussian { mean: vec![0.0], var: vec![1.0] }];
        for seed in 0..8 {
            let hub_labels = kmeans(
                &Tensor2::from_rows(&[vec![-1.0], vec![1.0]]).unwrap(),
                KMeansOptions::new(2, seed),
            )
            .unwrap()
            .labeling
            .labels;
            let lab = hub_seeded_labeling(&hubs, &data, 2, seed).unwrap();
            assert_eq!(lab.labels[0], hub_labels[0]);
        }
    }

    #[test]
    fn hub_seeded_fallback_with_too_few_hubs() {
        let hubs = vec![IsoGaussian { mean: vec![0.0], var: 1.0 }];
        let data: Vec<DiagGaussian> =
            [0.0, 0.1, 9.0, 9.1].iter().map(|&m| DiagGaussian { mean: vec![m], var: vec![1.0] }).collect();
        let lab = hub_seeded_labeling(&hubs, &data, 2, 0).unwrap();
        assert!(lab.seeds.is_none());
        assert_eq!(v_measure(&lab.labels, &[0, 0, 1, 1]).unwrap().v_measure, 1.0);
    }
}
