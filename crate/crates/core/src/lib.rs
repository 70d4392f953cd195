//! Variational autoencoder with a hub-based mixture prior and contrastive regularizer.

pub mod cli;
pub mod clustering;
pub mod dataio;
pub mod distributions;
pub mod error;
pub mod hubness;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
