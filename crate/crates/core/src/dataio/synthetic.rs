use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{param_err, Result};
use crate::numerics::Tensor2;

/// Isotropic Gaussian blobs squashed into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub dim: usize,
    pub per_cluster: usize,
    /// Std of the center coordinates.
    pub spread: f64,
    /// Within-cluster std.
    pub std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn is_separated(&self) -> bool {
        self.spread > 3.0 * self.std
    }

    fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.dim == 0 || self.per_cluster == 0 {
            return param_err("clusters, dim and per_cluster must be positive");
        }
        if !(self.spread >= 0.0 && self.std >= 0.0 && self.spread.is_finite() && self.std.is_finite()) {
            return param_err("spread and std must be finite and non-negative");
        }
        Ok(())
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Returns the dataset and the pre-squash blob centers.
/// Separated specs place centers more than 6 std apart.
pub fn make_synthetic_with_centers(spec: &SyntheticSpec) -> Result<(Dataset, Vec<Vec<f64>>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center_dist = Normal::new(0.0, spec.spread).expect("validated");
    let noise = Normal::new(0.0, spec.std).expect("validated");
    let min_sep = 6.0 * spec.std;

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.clusters);
    while centers.len() < spec.clusters {
        let mut candidate = Vec::new();
        for attempt in 0.. {
            candidate = (0..spec.dim).map(|_| center_dist.sample(&mut rng)).collect();
            let far = centers.iter().all(|c: &Vec<f64>| {
                c.iter().zip(&candidate).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() > min_sep
            });
            if !spec.is_separated() || far {
                break;
            }
            if attempt >= 10_000 {
                return param_err("could not place separated centers");
            }
        }
        centers.push(candidate);
    }

    let n = spec.clusters * spec.per_cluster;
    let mut x = Tensor2::zeros(n, spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (k, center) in centers.iter().enumerate() {
        for j in 0..spec.per_cluster {
            let r = k * spec.per_cluster + j;
            for (c, mu) in center.iter().enumerate() {
                x.set(r, c, logistic(mu + noise.sample(&mut rng)));
            }
            labels.push(k);
        }
    }
    let name = format!("synthetic-{}x{}", spec.clusters, spec.dim);
    let data = Dataset::new(name, x, Some(labels))?.with_default_splits(spec.seed);
    Ok((data, centers))
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    make_synthetic_with_centers(spec).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(clusters: usize) -> SyntheticSpec {
        SyntheticSpec { clusters, dim: 10, per_cluster: 50, spread: 3.0, std: 0.3, seed: 11 }
    }

    #[test]
    fn single_cluster() {
        let d = make_synthetic(&spec(1)).unwrap();
        assert!(d.labels.unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_synthetic(&spec(3)).unwrap(), make_synthetic(&spec(3)).unwrap());
    }

    #[test]
    fn separated_fixture_is_nearest_center_classifiable() {
        let (d, centers) = make_synthetic_with_centers(&spec(4)).unwrap();
        for (i, c) in centers.iter().enumerate() {
            for o in &centers[i + 1..] {
                let dist: f64 = c.iter().zip(o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist > 6.0 * 0.3);
            }
        }
        let labels = d.labels.as_ref().unwrap();
        for (r, row) in d.x.row_iter().enumerate() {
            let pre: Vec<f64> = row.iter().map(|p| (p / (1.0 - p)).ln()).collect();
            let nearest = (0..centers.len())
                .min_by(|&a, &b| {
                    let da: f64 = centers[a].iter().zip(&pre).map(|(c, v)| (c - v).powi(2)).sum();
                    let db: f64 = centers[b].iter().zip(&pre).map(|(c, v)| (c - v).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest, labels[r]);
        }
    }
}
