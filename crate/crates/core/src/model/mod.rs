//! The regression network, its constraint layers, and checkpoints.

pub mod checkpoint;
pub mod constraints;
pub mod mlp;

pub use checkpoint::{Checkpoint, Head};
pub use constraints::{apply_completion, apply_correction, ConstraintConfig, ConstraintMode};
pub use mlp::{Activation, Mlp, MlpF32, Tape};
