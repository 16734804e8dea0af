//! Configuration, training, evaluation, benchmarking and ablation drivers.

mod ablate;
pub mod cli;
mod config;
mod data;
mod optim;
mod train;

pub use ablate::{ablation_sweep, bench, AblationRow, AblationTable, ABLATION_FILE, ABLATION_HEADER};
pub use config::{ClassWeighting, TrainConfig, KEYS};
pub use data::{derive_seed, pixel_class_counts, predicted_masks, Batch};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use train::{
    compute_step, evaluate, resolve_loss, train, train_loop, train_with, with_efficiency, EpochRecord, RunRecord,
    TrainOutcome, CHECKPOINT_FILE, REFERENCE_SIZE, RUN_RECORD_FILE,
};
