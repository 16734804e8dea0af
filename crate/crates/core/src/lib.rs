//! Dual-stream multi-task network for gas-plume segmentation and acidosis
//! classification from paired CO2/CH4 optical gas images.
//!
//! The crate is layered bottom-up:
//!
//! * [`kernels`]: tensors, differentiable kernels and a small graph engine
//! * [`net`]: the network and its ablation variants
//! * [`losses`]: focal, Dice and the multi-task objective
//! * [`metrics`]: classification, region, boundary and efficiency metrics
//! * [`synthgas`]: a synthetic paired-gas dataset generator
//! * [`harness`]: configuration, training, evaluation and ablation drivers

pub mod error;
pub mod harness;
pub mod image;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod synthgas;

pub use error::{Error, Result};
