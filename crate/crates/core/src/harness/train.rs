//! Training loop, evaluation and run records.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ClassWeighting, TrainConfig};
use super::data::{derive_seed, pixel_class_counts, predicted_masks, Batch};
use super::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::error::{Error, Result};
use crate::kernels::{ForwardOptions, Grads, Tape};
use crate::losses::{inverse_frequency_weights, multitask_loss, LossBreakdown, LossConfig};
use crate::metrics::{EvalAccumulator, MetricsReport};
use crate::net::{checkpoint, FumeNet, Modality, Variant, NUM_CLASSES};
use crate::synthgas::{augment, Dataset, GasFramePair, Sample, Split};

pub const CHECKPOINT_FILE: &str = "checkpoint.fume";
pub const RUN_RECORD_FILE: &str = "run_record.csv";
const EVAL_BATCH: usize = 16;
/// Reference input side for the parameter and MAC columns of reports.
pub const REFERENCE_SIZE: usize = 512;

/// One optimisation step's loss and parameter gradients.
pub fn compute_step(net: &FumeNet, batch: &Batch, loss: &LossConfig, seed: u64) -> Result<(LossBreakdown, Grads, Tape)> {
    let tape = net.forward_tape(&batch.frames[0], &batch.frames[1], ForwardOptions::train(seed))?;
    let out = net.outputs(&tape);
    let (breakdown, grads) = multitask_loss(&out, &batch.targets(), loss)?;
    let params = net.backward(&tape, grads.seg, grads.cls)?;
    Ok((breakdown, params, tape))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Sample-weighted means over the epoch.
    pub loss: LossBreakdown,
    pub val: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub checkpoint: Option<PathBuf>,
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn csv_header() -> &'static str {
        "epoch,lr,loss_total,loss_seg_co2,loss_seg_ch4,loss_cls,val_accuracy,val_miou,val_dice,val_gas_iou_co2,val_gas_iou_ch4"
    }

    /// Per-epoch table followed by `#`-prefixed summary lines.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut s = format!("{}\n", Self::csv_header());
        for e in &self.epochs {
            writeln!(
                s,
                "{},{:.9},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
                e.epoch,
                e.lr,
                e.loss.total,
                e.loss.seg[0],
                e.loss.seg[1],
                e.loss.cls,
                f(e.val.accuracy),
                f(e.val.miou),
                f(e.val.dice),
                f(e.val.gas_iou(Modality::Co2)),
                f(e.val.gas_iou(Modality::Ch4))
            )
            .expect("writing to a string");
        }
        writeln!(s, "# variant={} seed={} best_epoch={}", self.variant, self.seed, self.best_epoch).expect("string");
        if let Some(p) = &self.checkpoint {
            writeln!(s, "# checkpoint={}", p.display()).expect("string");
        }
        writeln!(s, "# wall_clock_s={:.3}", self.wall_clock_s).expect("string");
        s
    }
}

pub struct TrainOutcome {
    /// Network holding the selected (best validation) weights.
    pub net: FumeNet,
    pub record: RunRecord,
}

/// Streams of the pair each variant reads.
fn streams(variant: Variant) -> Vec<usize> {
    variant.modalities().iter().map(|m| m.index()).collect()
}

/// Loss settings for a run, with class weights resolved from the training
/// split.
pub fn resolve_loss(cfg: &TrainConfig, train: &[&Sample]) -> LossConfig {
    let mut loss = cfg.loss_config();
    if cfg.class_weights == ClassWeighting::Inverse {
        loss.seg_weights = inverse_frequency_weights(&pixel_class_counts(
            train.iter().map(|s| &s.pair),
            &streams(cfg.variant),
        ));
        let mut labels = [0u64; NUM_CLASSES];
        for s in train {
            labels[s.pair.label.index()] += 1;
        }
        loss.cls_weights = inverse_frequency_weights(&labels);
    }
    loss
}

/// Selection score: validation mIoU, or accuracy for variants without a
/// segmentation head.
fn selection_score(variant: Variant, val: &MetricsReport) -> f64 {
    let v = if variant.has_segmentation() { val.miou } else { val.accuracy };
    v.unwrap_or(f64::NEG_INFINITY)
}

/// Train on the dataset's train split, validating after every epoch.
/// `progress` sees each finished epoch.
pub fn train_with(cfg: &TrainConfig, data: &Dataset, progress: &mut dyn FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let train = data.split(Split::Train);
    let val = data.split(Split::Val);
    if train.is_empty() {
        return Err(Error::Data("the train split is empty".into()));
    }
    for label in crate::synthgas::HealthLabel::ALL {
        if !train.iter().any(|s| s.pair.label == label) {
            return Err(Error::Data(format!("no {label} samples in the train split")));
        }
    }
    let loss_cfg = resolve_loss(cfg, &train);
    let mut net = FumeNet::build(cfg.variant, cfg.seed)?;
    let mut opt = AdamW::new(
        AdamWConfig {
            weight_decay: cfg.weight_decay,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        },
        net.params(),
    );
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::kernels::ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64, 1])));
        let mut sums = LossBreakdown::default();
        let mut lr = cfg.lr;
        for chunk in order.chunks(cfg.batch_size) {
            let pairs: Vec<Cow<GasFramePair>> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        Cow::Owned(augment(&train[i].pair, derive_seed(cfg.seed, &[epoch as u64, i as u64, 2])))
                    } else {
                        Cow::Borrowed(&train[i].pair)
                    }
                })
                .collect();
            let refs: Vec<&GasFramePair> = pairs.iter().map(|p| p.as_ref()).collect();
            let ids: Vec<String> = chunk.iter().map(|&i| train[i].id.clone()).collect();
            let batch = Batch::new(ids, &refs)?;
            let (loss, grads, tape) =
                compute_step(&net, &batch, &loss_cfg, derive_seed(cfg.seed, &[step as u64, 3])).map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!(
                        "{m} (epoch {}, step {step}, last batch ids {})",
                        epoch + 1,
                        batch.ids.join(" ")
                    )),
                    e => e,
                })?;
            net.commit_running_stats(&tape);
            lr = cosine_lr(cfg.lr, step, total_steps);
            opt.step(net.params_mut(), &grads, lr);
            let n = batch.len() as f64;
            sums.total += loss.total * n;
            sums.seg[0] += loss.seg[0] * n;
            sums.seg[1] += loss.seg[1] * n;
            sums.cls += loss.cls * n;
            step += 1;
        }
        let n = train.len() as f64;
        let loss = LossBreakdown {
            total: sums.total / n,
            seg: [sums.seg[0] / n, sums.seg[1] / n],
            cls: sums.cls / n,
        };
        let val_report = evaluate(&net, &val)?;
        let score = selection_score(cfg.variant, &val_report);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch + 1, net.params().clone()));
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            loss,
            val: val_report,
        };
        progress(&record);
        epochs.push(record);
    }
    let best_epoch = match best {
        Some((_, e, store)) => {
            *net.params_mut() = store;
            e
        }
        None => 0,
    };
    Ok(TrainOutcome {
        net,
        record: RunRecord {
            variant: cfg.variant,
            seed: cfg.seed,
            epochs,
            best_epoch,
            checkpoint: None,
            wall_clock_s: start.elapsed().as_secs_f64(),
        },
    })
}

pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    train_with(cfg, data, &mut |_| {})
}

/// Load the configured dataset, train, and write the checkpoint and run
/// record into the output directory.
pub fn train_loop(cfg: &TrainConfig, progress: &mut dyn FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    let data = Dataset::load(&cfg.dataset)?;
    let mut outcome = train_with(cfg, &data, progress)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let ckpt = cfg.out.join(CHECKPOINT_FILE);
    checkpoint::save(&outcome.net, &ckpt)?;
    outcome.record.checkpoint = Some(ckpt);
    let rec = cfg.out.join(RUN_RECORD_FILE);
    fs::write(&rec, outcome.record.to_csv()).map_err(|e| Error::io(&rec, e))?;
    Ok(outcome)
}

/// Eval-mode metrics over `samples`. Segmentation is scored on present
/// streams only; variants without a classification head score uniform
/// logits.
pub fn evaluate(net: &FumeNet, samples: &[&Sample]) -> Result<MetricsReport> {
    let mut acc = EvalAccumulator::new();
    for chunk in samples.chunks(EVAL_BATCH) {
        let pairs: Vec<&GasFramePair> = chunk.iter().map(|s| &s.pair).collect();
        let batch = Batch::new(chunk.iter().map(|s| s.id.clone()).collect(), &pairs)?;
        let out = net.forward(&batch.frames[0], &batch.frames[1])?;
        let preds = Modality::BOTH.map(|m| out.seg(m).map(predicted_masks).transpose());
        let [p0, p1] = preds;
        let preds = [p0?, p1?];
        for (i, pair) in pairs.iter().enumerate() {
            let logits = out.class_logits.as_ref().map(|l| &l.data()[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]);
            acc.add_classification(pair.label.index(), logits);
            for m in Modality::BOTH {
                if let Some(p) = &preds[m.index()] {
                    if pair.is_present(m) {
                        acc.add_segmentation(m, &p[i], pair.mask(m));
                    }
                }
            }
            acc.finish_sample();
        }
    }
    Ok(acc.report())
}

/// Add parameter count (millions) and MACs (billions, at the reference
/// input size) to a report.
pub fn with_efficiency(mut report: MetricsReport, net: &FumeNet) -> Result<MetricsReport> {
    report.params_m = Some(net.param_count() as f64 / 1e6);
    report.macs_g = Some(net.macs(REFERENCE_SIZE, REFERENCE_SIZE)? as f64 / 1e9);
    Ok(report)
}
