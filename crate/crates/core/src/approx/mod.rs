//! Numerical machinery shared by every learner: small feedforward networks,
//! the Adam optimizer, soft-tracked target copies, Gaussian densities and
//! parameter checkpoints.

mod adam;
mod checkpoint;
mod gaussian;
mod mlp;
mod target;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use gaussian::gaussian_log_density;
pub use mlp::{stack_rows, Activation, Dense, ForwardCache, Mlp, MlpGrads};
pub use target::TargetCopy;
