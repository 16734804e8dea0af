//! Central-difference check of the whole network's reverse pass.
//!
//! cargo run --release --example gradcheck -- self-attn-only

use fume::kernels::{grad_check, random_tensor, ForwardOptions, GradCheckOptions};
use fume::net::{FumeNet, Variant};

fn main() -> fume::Result<()> {
    let variant: Variant = std::env::args().nth(1).unwrap_or_else(|| "fume".into()).parse()?;
    let mut net = FumeNet::build(variant, 0)?;
    let graph = net.graph().clone();
    let frames = |seed| random_tensor(&[2, 1, 32, 32], seed).map(|v| 0.5 + 0.5 * v);
    let opts = GradCheckOptions {
        samples: 1,
        forward: ForwardOptions::train(1),
        ..GradCheckOptions::default()
    };
    let report = grad_check(&graph, net.params_mut(), &[frames(1), frames(2)], &opts)?;
    let mut rows = report.params.clone();
    rows.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
    println!("{:<44}{:>12}{:>12}", "tensor", "rel error", "max |grad|");
    for p in rows.iter().take(12) {
        println!("{:<44}{:>12.2e}{:>12.2e}", p.name, p.max_rel_error, p.max_abs_grad);
    }
    println!(
        "\n{} tensors, worst {:.2e} (tolerance {:.0e}), roundoff level {:.1e}: {}",
        report.params.len(),
        report.max_rel_error(),
        report.tolerance,
        report.roundoff,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(())
}
