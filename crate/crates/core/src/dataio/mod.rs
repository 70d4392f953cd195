//! Datasets, loaders and synthetic fixtures.

mod csv;
mod idx;
mod synthetic;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::numerics::Tensor2;
use crate::training::TrainingData;

pub use self::csv::{load_csv, parse_csv, save_csv, to_csv_string};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{make_synthetic, make_synthetic_with_centers, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Disjoint index lists covering a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// One row per example, values in `[0, 1]`.
    pub x: Tensor2,
    pub labels: Option<Vec<usize>>,
    pub splits: Splits,
}

impl Dataset {
    /// Wraps data with every row in the training split.
    pub fn new(name: impl Into<String>, x: Tensor2, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(v) = x.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return param_err(format!("value {v} outside [0, 1]"));
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return param_err(format!("{} labels for {} rows", l.len(), x.rows()));
            }
        }
        let splits = Splits { train: (0..x.rows()).collect(), ..Splits::default() };
        Ok(Self { name: name.into(), x, labels, splits })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Seeded shuffle into train/val/test by fraction (rounded counts).
    pub fn split_randomly(mut self, seed: u64, val_frac: f64, test_frac: f64) -> Self {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((n as f64) * test_frac).round() as usize;
        let n_val = (((n as f64) * val_frac).round() as usize).min(n - n_test);
        let test = order[..n_test].to_vec();
        let val = order[n_test..n_test + n_val].to_vec();
        let train = order[n_test + n_val..].to_vec();
        self.splits = Splits { train, val, test };
        self
    }

    /// The default 70/10/20 split.
    pub fn with_default_splits(self, seed: u64) -> Self {
        self.split_randomly(seed, 0.1, 0.2)
    }

    /// Appends a canonical test set and holds out 10% of `self` for validation.
    pub fn with_test_set(self, test: Dataset, seed: u64) -> Result<Self> {
        if test.dim() != self.dim() {
            return param_err(format!("test set has {} columns, train has {}", test.dim(), self.dim()));
        }
        let n_train = self.len();
        let x = self.x.vstack(&test.x)?;
        let labels = match (self.labels, test.labels) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((n_train as f64) * 0.1).round() as usize;
        let splits = Splits {
            val: order[..n_val].to_vec(),
            train: order[n_val..].to_vec(),
            test: (n_train..x.rows()).collect(),
        };
        Ok(Self { name: self.name, x, labels, splits })
    }

    pub fn split_x(&self, split: Split) -> Tensor2 {
        self.x.select_rows(self.splits.get(split))
    }

    pub fn split_labels(&self, split: Split) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|l| self.splits.get(split).iter().map(|&i| l[i]).collect())
    }

    pub fn training_data(&self) -> TrainingData {
        TrainingData {
            train: self.split_x(Split::Train),
            val: self.split_x(Split::Val),
            train_labels: self.split_labels(Split::Train),
        }
    }
}

/// Replaces each value with a Bernoulli draw of that probability.
pub fn binarize<R: Rng + ?Sized>(x: &Tensor2, rng: &mut R) -> Tensor2 {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = if rng.random::<f64>() < *v { 1.0 } else { 0.0 };
    }
    out
}
