//! Dense tensors, parameter containers, the normalized-gradient Adam
//! optimizer and the checkpoint format.

mod adam;
mod checkpoint;
mod params;
mod tensor;

pub use adam::{adam_step, normalize_blocks, AdamConfig, AdamState, NORM_FLOOR};
pub use checkpoint::Checkpoint;
pub use params::ParamSet;
pub use tensor::Tensor2;
