use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fume::harness::cli::{run, CliArgs, Command};
use fume::synthgas::Split;

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Generate,
    Train,
    Eval,
    Bench,
    Count,
    Ablate,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

/// Dual-gas plume segmentation and acidosis classification.
#[derive(Parser)]
#[command(version)]
struct Args {
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Dataset directory for `generate`, output directory otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let args = CliArgs {
        command: match a.command {
            Cmd::Generate => Command::Generate,
            Cmd::Train => Command::Train,
            Cmd::Eval => Command::Eval,
            Cmd::Bench => Command::Bench,
            Cmd::Count => Command::Count,
            Cmd::Ablate => Command::Ablate,
        },
        config: a.config,
        checkpoint: a.checkpoint,
        split: a.split.map(|s| match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }),
        out: a.out,
    };
    match run(&args, &mut io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fume: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
