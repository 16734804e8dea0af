//! Differentiable kernels, parameter storage and the graph engine the
//! network is assembled from. Everything runs in 64-bit floats.

pub mod attention;
pub mod blocks;
pub mod conv;
mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod norm;
pub mod ops;
pub mod params;
pub mod spec;
pub mod tensor;

pub use blocks::{inverted_residual_forward, ppm_forward, PPM_SCALES};
pub use conv::{conv2d, conv2d_backward, dsconv_forward, dsconv_macs, ConvSpec};
pub use gradcheck::{grad_check, random_tensor, GradCheckOptions, GradCheckReport, ParamCheck, Probe};
pub use graph::{ForwardOptions, Graph, GraphBuilder, Mode, NodeId, Op, Tape};
pub use params::{Grads, Init, ParamId, ParamKind, ParamStore};
pub use spec::KernelSpec;
pub use tensor::Tensor;
