//! Standalone evaluation of the composite blocks the network is built from.
//!
//! Each function assembles a one-block graph over `store` (creating any
//! missing parameters under `seed`) and runs it in eval mode, so running
//! statistics act as a fixed affine map.

use super::graph::{ForwardOptions, GraphBuilder};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

/// Pooling scales of the pyramid pooling module.
pub const PPM_SCALES: [usize; 4] = [1, 2, 3, 6];

pub fn inverted_residual_forward(
    input: &Tensor,
    store: &mut ParamStore,
    name: &str,
    out_channels: usize,
    expansion: usize,
    stride: usize,
    seed: u64,
) -> Result<Tensor> {
    let (_, c, _, _) = input.dims4()?;
    let mut b = GraphBuilder::new(store, seed);
    let x = b.input("x");
    let y = b.inverted_residual(name, x, c, out_channels, expansion, stride)?;
    b.output("y", y);
    let graph = b.finish();
    let tape = graph.forward(store, &[input.clone()], ForwardOptions::eval())?;
    Ok(tape.value(y).clone())
}

/// Pyramid pooling over `scales`. Maps smaller than a pooling scale use
/// overlapping bins, so every scale yields a defined output.
pub fn ppm_forward(input: &Tensor, store: &mut ParamStore, name: &str, scales: &[usize], seed: u64) -> Result<Tensor> {
    let (_, c, h, w) = input.dims4()?;
    if h == 0 || w == 0 || c < 4 {
        return Err(shape_err!("pyramid pooling needs at least 4 channels and a non-empty map, got {:?}", input.shape()));
    }
    let mut b = GraphBuilder::new(store, seed);
    let x = b.input("x");
    let y = b.ppm(name, x, c, scales)?;
    b.output("y", y);
    let graph = b.finish();
    let tape = graph.forward(store, &[input.clone()], ForwardOptions::eval())?;
    Ok(tape.value(y).clone())
}
