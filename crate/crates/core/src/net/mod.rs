//! The dual-stream network: a shared encoder applied to both gas streams,
//! gated self-attention per stream, channel-attention fusion, per-stream
//! segmentation decoders and a classification head.

pub mod checkpoint;
mod model;
mod variant;

pub use model::{
    BuildOptions, ForwardOutput, FumeNet, EXPANSION, FUSION_REDUCTION, HEAD_HIDDEN, HEAD_KEEP, HIGH_CHANNELS,
    INPUT_MULTIPLE, KEY_DIM, LOW_CHANNELS, NUM_CLASSES, STAGES,
};
pub use variant::{Modality, Variant};
