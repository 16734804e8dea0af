//! Load a run configuration, apply an override and print the effective
//! settings in the file format.
//!
//! cargo run --example config -- crates/core/configs/desk.cfg

use std::path::Path;

use fume::harness::TrainConfig;

fn main() -> fume::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "crates/core/configs/desk.cfg".into());
    let mut cfg = TrainConfig::load(&path)?;
    cfg.set("variant", "full-cross-modal-attn", Path::new("."))?;
    cfg.validate()?;
    print!("{}", cfg.to_text());
    let loss = cfg.loss_config();
    println!("# loss: lambda {} focal gamma {} dice smooth {}", loss.lambda, loss.focal_gamma, loss.dice_smooth);

    match TrainConfig::parse("lr = 0.001\nlearning_rate = 0.1\n", Path::new(".")) {
        Ok(_) => unreachable!("unknown keys are rejected"),
        Err(e) => println!("# rejected: {e} (exit code {})", e.exit_code()),
    }
    Ok(())
}
