//! Evaluate a saved checkpoint on a regenerated split, with per-class
//! confusion counts.
//!
//! cargo run --release --example eval -- runs/checkpoint.fume val

use fume::harness::{evaluate, with_efficiency, Batch, TrainConfig};
use fume::metrics::EvalAccumulator;
use fume::net::checkpoint;
use fume::synthgas::{Dataset, Split};

fn main() -> fume::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "runs/checkpoint.fume".into());
    let split: Split = args.next().unwrap_or_else(|| "test".into()).parse()?;
    let net = checkpoint::load(&path)?;
    let cfg = TrainConfig::default();
    let data = Dataset::generate(&cfg.counts, cfg.seed, cfg.size)?;
    let samples = data.split(split);
    println!("{} on {} {split} pairs", net.variant(), samples.len());
    let report = with_efficiency(evaluate(&net, &samples)?, &net)?;
    print!("{}", report.to_text());

    if net.variant().has_classification() {
        let mut acc = EvalAccumulator::new();
        for s in &samples {
            let b = Batch::new(vec![s.id.clone()], &[&s.pair])?;
            let out = net.forward(&b.frames[0], &b.frames[1])?;
            let logits = out.class_logits.expect("classification head");
            acc.add_classification(s.pair.label.index(), Some(logits.data()));
            acc.finish_sample();
        }
        println!("\nconfusion (rows truth, columns prediction): {:?}", acc.confusion());
    }
    Ok(())
}
