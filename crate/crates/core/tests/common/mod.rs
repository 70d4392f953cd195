#![allow(dead_code)]

use hub_vae::model::{standard_normal, Architecture, BatchForward, LossSpec};
use hub_vae::numerics::{ParamSet, Tensor2};
use hub_vae::training::Triplet;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Below this magnitude both gradients count as zero and the error is absolute.
pub const FD_FLOOR: f64 = 1e-7;

/// A fully fixed loss evaluation: parameters, batch, hubs, noise and triplets.
pub struct GradCase {
    pub arch: Architecture,
    pub params: ParamSet,
    pub x: Tensor2,
    pub hubs: Tensor2,
    pub eps: Tensor2,
    pub triplets: Vec<Triplet>,
    pub spec: LossSpec,
}

impl GradCase {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_dim = rng.random_range(2..=16);
        let latent_dim = rng.random_range(1..=4);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=8)).collect();
        let b = rng.random_range(3..=8);
        let m = rng.random_range(1..=4);
        let arch = Architecture::new(input_dim, hidden, latent_dim);
        let mut params = arch.init_params(rng.random_range(0.3..2.0), &mut rng);
        // nonzero biases so that every bias coordinate carries signal
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let x = Tensor2::from_vec(b, input_dim, (0..b * input_dim).map(|_| rng.random::<f64>()).collect()).unwrap();
        let hubs =
            Tensor2::from_vec(m, input_dim, (0..m * input_dim).map(|_| rng.random::<f64>()).collect()).unwrap();
        let eps = standard_normal(b, latent_dim, &mut rng);
        let mut triplets = Vec::new();
        for anchor in 0..b {
            let others: Vec<usize> = (0..b).filter(|&j| j != anchor).collect();
            let count = rng.random_range(2..=others.len());
            let pick = index::sample(&mut rng, others.len(), count);
            let chosen: Vec<usize> = pick.into_iter().map(|i| others[i]).collect();
            triplets.push(Triplet { anchor, positive: chosen[0], negatives: chosen[1..].to_vec() });
        }
        let spec = LossSpec::hub_vae(rng.random_range(0.1..=1.0));
        Self { arch, params, x, hubs, eps, triplets, spec }
    }

    pub fn loss(&self, params: &ParamSet) -> f64 {
        let fwd = BatchForward::run(&self.arch, params, &self.x, Some(&self.hubs), self.eps.clone()).unwrap();
        fwd.losses(&self.x, &self.triplets, &self.spec).unwrap().total
    }

    pub fn analytic(&self) -> ParamSet {
        let fwd = BatchForward::run(&self.arch, &self.params, &self.x, Some(&self.hubs), self.eps.clone()).unwrap();
        fwd.backward(&self.arch, &self.params, &self.x, &self.triplets, &self.spec).unwrap().1
    }

    /// Central differences on every scalar parameter.
    pub fn numeric(&self) -> Vec<f64> {
        let n = self.params.num_scalars();
        let mut p = self.params.clone();
        (0..n)
            .map(|i| {
                let v = p.flat_get(i);
                p.flat_set(i, v + FD_STEP);
                let up = self.loss(&p);
                p.flat_set(i, v - FD_STEP);
                let down = self.loss(&p);
                p.flat_set(i, v);
                (up - down) / (2.0 * FD_STEP)
            })
            .collect()
    }

    /// Relative errors between analytic and numeric gradients, one per coordinate.
    pub fn relative_errors(&self) -> Vec<f64> {
        let analytic = self.analytic();
        let numeric = self.numeric();
        numeric
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let a = analytic.flat_get(i);
                (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
            })
            .collect()
    }
}

/// O(n² log n) reference kNN: sort each row by (distance, index).
pub fn brute_knn(dist: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let n = dist.len();
    (0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
            others.truncate(k);
            others
        })
        .collect()
}

/// In-degrees and reverse neighbor sets of a kNN list.
pub fn brute_hubness(knn: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = knn.len();
    let mut counts = vec![0; n];
    let mut rknn = vec![Vec::new(); n];
    for (i, list) in knn.iter().enumerate() {
        for &j in list {
            counts[j] += 1;
            rknn[j].push(i);
        }
    }
    (counts, rknn)
}

/// Indices with count strictly above mean + lambda * population std.
pub fn brute_select(counts: &[usize], lambda: f64) -> Vec<usize> {
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    let thr = mean + lambda * var.sqrt();
    (0..counts.len()).filter(|&i| counts[i] as f64 > thr).collect()
}

/// Squared Wasserstein distance between diagonal Gaussians, written out directly.
pub fn w2_diag(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..m1.len() {
        s += (m1[i] - m2[i]).powi(2) + (v1[i].sqrt() - v2[i].sqrt()).powi(2);
    }
    s.sqrt()
}
