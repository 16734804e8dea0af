//! Train one variant on an in-memory synthetic dataset and report test
//! metrics.
//!
//! Arguments are config overrides:
//!
//! cargo run --release --example train -- variant=co2-only epochs=5 seed=3
//!
//! The selected weights are saved to `{out}/checkpoint.fume`.

use std::path::Path;

use fume::harness::{evaluate, train_with, TrainConfig, CHECKPOINT_FILE};
use fume::net::checkpoint;
use fume::synthgas::{Dataset, Split};

fn main() -> fume::Result<()> {
    let mut cfg = TrainConfig::default();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').unwrap_or((&arg, ""));
        cfg.set(k, v, Path::new("."))?;
    }
    cfg.validate()?;
    let data = Dataset::generate(&cfg.counts, cfg.seed, cfg.size)?;
    println!("{} train / {} val / {} test pairs", data.split(Split::Train).len(), data.split(Split::Val).len(), data.split(Split::Test).len());
    let outcome = train_with(&cfg, &data, &mut |e| {
        println!(
            "epoch {:>2}  loss {:.4} (co2 {:.4} ch4 {:.4} cls {:.4})  val acc {:?}  miou {:?}  gas iou {:?}",
            e.epoch,
            e.loss.total,
            e.loss.seg[0],
            e.loss.seg[1],
            e.loss.cls,
            e.val.accuracy,
            e.val.miou,
            e.val.iou.map(|h| h.map(|i| i[2]))
        );
    })?;
    let report = evaluate(&outcome.net, &data.split(Split::Test))?;
    println!("best epoch {}, {:.1} s", outcome.record.best_epoch, outcome.record.wall_clock_s);
    print!("{}", report.to_text());
    std::fs::create_dir_all(&cfg.out).map_err(|e| fume::Error::io(&cfg.out, e))?;
    checkpoint::save(&outcome.net, cfg.out.join(CHECKPOINT_FILE))?;
    Ok(())
}
