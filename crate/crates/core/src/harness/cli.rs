//! Command implementations behind the `fume` binary. Each writes its
//! human-readable output to `out` and its artifacts to disk.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::ablate::{ablation_sweep, bench, ABLATION_FILE};
use super::config::TrainConfig;
use super::train::{evaluate, train_loop, with_efficiency, CHECKPOINT_FILE, REFERENCE_SIZE};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::net::{checkpoint, FumeNet, Variant};
use crate::synthgas::{build_dataset, Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Eval,
    Bench,
    Count,
    Ablate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliArgs {
    pub command: Command,
    pub config: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<Split>,
    /// Dataset directory for `generate`, output directory otherwise.
    pub out: Option<PathBuf>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run one command.
pub fn run(args: &CliArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = TrainConfig::load(&args.config)?;
    if let Some(dir) = &args.out {
        if args.command == Command::Generate {
            cfg.dataset = dir.clone();
        } else {
            cfg.out = dir.clone();
        }
    }
    match args.command {
        Command::Generate => cli_generate(&cfg, out),
        Command::Train => cli_train(&cfg, out),
        Command::Eval => {
            let ckpt = args.checkpoint.clone().unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
            cli_eval(&cfg, &ckpt, args.split.unwrap_or(Split::Test), out).map(|_| ())
        }
        Command::Bench => cli_bench(&cfg, args.checkpoint.as_deref(), out),
        Command::Count => cli_count(out),
        Command::Ablate => cli_ablate(&cfg, out),
    }
}

pub fn cli_generate(cfg: &TrainConfig, out: &mut dyn Write) -> Result<()> {
    let manifest = build_dataset(&cfg.counts, cfg.seed, cfg.size, &cfg.dataset)?;
    for split in Split::ALL {
        writeln!(out, "{split}: {}", manifest.split(split).count()).map_err(io_err)?;
    }
    writeln!(out, "wrote {} samples to {}", manifest.rows.len(), cfg.dataset.display()).map_err(io_err)
}

pub fn cli_train(cfg: &TrainConfig, out: &mut dyn Write) -> Result<()> {
    let mut write_err = None;
    let outcome = train_loop(cfg, &mut |e| {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "na".into());
        if let Err(err) = writeln!(
            out,
            "epoch {:>3}  loss {:.4}  lr {:.2e}  val acc {}  val miou {}",
            e.epoch,
            e.loss.total,
            e.lr,
            f(e.val.accuracy),
            f(e.val.miou)
        ) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(e));
    }
    let r = &outcome.record;
    writeln!(out, "best epoch {} of {}, {:.1} s", r.best_epoch, r.epochs.len(), r.wall_clock_s).map_err(io_err)?;
    if let Some(p) = &r.checkpoint {
        writeln!(out, "checkpoint {}", p.display()).map_err(io_err)?;
    }
    Ok(())
}

/// Evaluate a checkpoint on one split; writes `eval_{split}.txt` and
/// `eval_{split}.csv` into the output directory.
pub fn cli_eval(cfg: &TrainConfig, ckpt: &Path, split: Split, out: &mut dyn Write) -> Result<MetricsReport> {
    let net = checkpoint::load(ckpt)?;
    let data = Dataset::load(&cfg.dataset)?;
    let report = with_efficiency(evaluate(&net, &data.split(split))?, &net)?;
    let csv = format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row());
    write_file(&cfg.out.join(format!("eval_{split}.txt")), &report.to_text())?;
    write_file(&cfg.out.join(format!("eval_{split}.csv")), &csv)?;
    write!(out, "{}{csv}", report.to_text()).map_err(io_err)?;
    Ok(report)
}

/// Latency of a checkpoint, or of a freshly built configured variant.
pub fn cli_bench(cfg: &TrainConfig, ckpt: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let net = match ckpt {
        Some(p) => checkpoint::load(p)?,
        None => FumeNet::build(cfg.variant, cfg.seed)?,
    };
    let b = bench(&net, cfg)?;
    writeln!(
        out,
        "variant={}\nsize={}\nwarmup={}\niterations={}\nlatency_ms={:.6}\nfps={:.6}",
        net.variant(),
        cfg.bench_size,
        b.warmup_runs,
        b.timed_runs,
        b.latency_ms,
        b.fps
    )
    .map_err(io_err)
}

/// Parameter and MAC counts of every variant at the reference input size.
pub fn count_table() -> Result<String> {
    let mut s = String::from("variant,params,params_m,macs_g\n");
    for v in Variant::ALL {
        let net = FumeNet::build(v, 0)?;
        let (p, m) = (net.param_count(), net.macs(REFERENCE_SIZE, REFERENCE_SIZE)?);
        s.push_str(&format!("{v},{p},{:.6},{:.6}\n", p as f64 / 1e6, m as f64 / 1e9));
    }
    Ok(s)
}

pub fn cli_count(out: &mut dyn Write) -> Result<()> {
    write!(out, "{}", count_table()?).map_err(io_err)
}

pub fn cli_ablate(cfg: &TrainConfig, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::load(&cfg.dataset)?;
    let mut last = None;
    let table = ablation_sweep(cfg, &data, &mut |v, e| {
        if last != Some(v) {
            last = Some(v);
            let _ = writeln!(out, "training {v}");
        }
        let _ = writeln!(out, "  epoch {:>3}  loss {:.4}", e.epoch, e.loss.total);
    })?;
    let csv = table.to_csv();
    write_file(&cfg.out.join(ABLATION_FILE), &csv)?;
    write!(out, "{csv}").map_err(io_err)
}
