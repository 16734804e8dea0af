//! Ablation sweep over every network variant.

use std::fmt::Write as _;

use super::config::TrainConfig;
use super::train::{evaluate, train_with, EpochRecord, RunRecord};
use crate::error::Result;
use crate::metrics::{bench_latency, BenchResult, MetricsReport};
use crate::net::{FumeNet, Variant};
use crate::synthgas::{Dataset, Split};

pub const ABLATION_HEADER: &str = "variant,acc,miou,dice,latency_ms,delta_miou";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// Test-split metrics, latency included.
    pub report: MetricsReport,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// mIoU change of `v` relative to the full model.
    pub fn delta_miou(&self, v: Variant) -> Option<f64> {
        let base = self.row(Variant::Fume)?.report.miou?;
        Some(self.row(v)?.report.miou? - base)
    }

    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut s = format!("{ABLATION_HEADER}\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.variant,
                f(r.report.accuracy),
                f(r.report.miou),
                f(r.report.dice),
                f(r.report.latency_ms),
                f(self.delta_miou(r.variant))
            )
            .expect("writing to a string");
        }
        s
    }
}

/// Benchmark a network at the configured bench size and protocol.
pub fn bench(net: &FumeNet, cfg: &TrainConfig) -> Result<BenchResult> {
    bench_latency(net, cfg.bench_size, cfg.bench_size, cfg.bench_protocol())
}

/// Train and test every variant with the same seed and data.
pub fn ablation_sweep(
    base: &TrainConfig,
    data: &Dataset,
    progress: &mut dyn FnMut(Variant, &EpochRecord),
) -> Result<AblationTable> {
    let test = data.split(Split::Test);
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let cfg = TrainConfig {
            variant,
            ..base.clone()
        };
        let outcome = train_with(&cfg, data, &mut |e| progress(variant, e))?;
        let mut report = evaluate(&outcome.net, &test)?;
        let b = bench(&outcome.net, &cfg)?;
        report.latency_ms = Some(b.latency_ms);
        report.fps = Some(b.fps);
        rows.push(AblationRow {
            variant,
            report,
            record: outcome.record,
        });
    }
    Ok(AblationTable { rows })
}
