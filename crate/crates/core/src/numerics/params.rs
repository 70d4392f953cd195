use crate::error::{dim_err, Error, Result};

use super::Tensor2;

/// Ordered collection of named parameter tensors.
///
/// The order is fixed at construction and is the order used by the
/// optimizer state and by checkpoints. Gradients are carried in a
/// `ParamSet` of identical layout (see [`ParamSet::zeros_like`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor2>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor2) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor2::zeros(t.rows(), t.cols())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor2> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    #[inline]
    pub fn get(&self, i: usize) -> &Tensor2 {
        &self.tensors[i]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize) -> &mut Tensor2 {
        &mut self.tensors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor2] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor2::len).sum()
    }

    /// Reads the scalar at a flat position across all tensors.
    pub fn flat_get(&self, mut idx: usize) -> f64 {
        for t in &self.tensors {
            if idx < t.len() {
                return t.data()[idx];
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut idx: usize, value: f64) {
        for t in &mut self.tensors {
            if idx < t.len() {
                t.data_mut()[idx] = value;
                return;
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_same_layout(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return dim_err("parameter sets have different names");
        }
        for (name, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name}: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor2::all_finite)
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}
