pub mod adam;
pub mod linear;
pub mod loss;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use linear::{fit_linear_baseline, LinearBaseline};
pub use loss::{bce_loss, mass_loss, mse_loss, pos_loss, DEFAULT_ALPHA, DEFAULT_BETA};
pub use trainer::{
    split_for_training, train, train_with, worst_r2_completion, EpochLog, EpochRecord, TrainConfig, TrainOutcome,
};
