//! L1 training with Adam, patch sampling, augmentation and evaluation.

mod adam;
mod config;
mod eval;
mod loss;
mod patch;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use eval::{evaluate, Bicubic, Upscaler};
pub use loss::l1_loss;
pub use patch::{augment, dihedral, flip_horizontal, rotate90, sample_patch, TrainImage};
pub use trainer::{
    sample_batch, train, train_step, LogRecord, TrainOptions, TrainOutcome, TrainSet,
    CHECKPOINT_FILE, LAMBDA_FILE, LOG_FILE, MODEL_FILE,
};
