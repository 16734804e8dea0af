//! Train every architecture variant on the same in-memory dataset, test and
//! bench each one, and print the ablation table.
//!
//! Takes the same key=value overrides as the train example:
//!
//! cargo run --release --example ablate -- epochs=10 bench_iterations=100

use std::path::Path;

use fume::harness::{ablation_sweep, TrainConfig};
use fume::synthgas::Dataset;

fn main() -> fume::Result<()> {
    let mut cfg = TrainConfig::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').unwrap_or((&arg, ""));
        cfg.set(k, v, Path::new("."))?;
    }
    cfg.validate()?;
    let data = Dataset::generate(&cfg.counts, cfg.seed, cfg.size)?;
    let table = ablation_sweep(&cfg, &data, &mut |v, e| {
        println!(
            "{:<22} epoch {:>2}  loss {:.4}  val acc {:?}  miou {:?}",
            v.name(),
            e.epoch,
            e.loss.total,
            e.val.accuracy.map(|a| a.round()),
            e.val.miou.map(|m| m.round())
        );
    })?;
    print!("{}", table.to_csv());
    Ok(())
}
