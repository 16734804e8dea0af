//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored and
//! unknown keys are errors. Relative paths are resolved against the
//! directory of the file they come from.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::metrics::BenchProtocol;
use crate::net::{Variant, INPUT_MULTIPLE};
use crate::synthgas::PhCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    /// Inverse class frequency over the training split, mean 1.
    Inverse,
    Uniform,
}

impl ClassWeighting {
    pub fn name(self) -> &'static str {
        match self {
            ClassWeighting::Inverse => "inverse",
            ClassWeighting::Uniform => "uniform",
        }
    }
}

impl FromStr for ClassWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(ClassWeighting::Inverse),
            "uniform" => Ok(ClassWeighting::Uniform),
            _ => Err(Error::Config(format!("class_weights must be inverse or uniform, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub variant: Variant,
    /// Dataset root (generated into, trained and evaluated from).
    pub dataset: PathBuf,
    /// Directory for checkpoints, run records and reports.
    pub out: PathBuf,
    /// Frame side length used by `generate`.
    pub size: usize,
    pub counts: PhCounts,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lambda: f64,
    pub focal_gamma: f64,
    pub dice_smooth: f64,
    pub class_weights: ClassWeighting,
    pub augment: bool,
    /// Frame side length used by `bench`.
    pub bench_size: usize,
    pub bench_warmup: usize,
    pub bench_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let protocol = BenchProtocol::default();
        TrainConfig {
            seed: 0,
            variant: Variant::Fume,
            dataset: PathBuf::from("data"),
            out: PathBuf::from("runs"),
            size: 64,
            counts: PhCounts::desk_default(),
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda: 0.5,
            focal_gamma: 2.0,
            dice_smooth: 1.0,
            class_weights: ClassWeighting::Inverse,
            augment: true,
            bench_size: 64,
            bench_warmup: protocol.warmup,
            bench_iterations: protocol.iterations,
        }
    }
}

pub const KEYS: [&str; 21] = [
    "seed",
    "variant",
    "dataset",
    "out",
    "size",
    "counts",
    "epochs",
    "batch_size",
    "lr",
    "weight_decay",
    "beta1",
    "beta2",
    "eps",
    "lambda",
    "focal_gamma",
    "dice_smooth",
    "class_weights",
    "augment",
    "bench_size",
    "bench_warmup",
    "bench_iterations",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value `{value}` for `{key}` (true or false)"))),
    }
}

impl TrainConfig {
    /// Parse config text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        match key {
            "seed" => self.seed = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "dataset" => self.dataset = path(value),
            "out" => self.out = path(value),
            "size" => self.size = parse(key, value)?,
            "counts" => self.counts = value.parse()?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "focal_gamma" => self.focal_gamma = parse(key, value)?,
            "dice_smooth" => self.dice_smooth = parse(key, value)?,
            "class_weights" => self.class_weights = value.parse()?,
            "augment" => self.augment = parse_bool(key, value)?,
            "bench_size" => self.bench_size = parse(key, value)?,
            "bench_warmup" => self.bench_warmup = parse(key, value)?,
            "bench_iterations" => self.bench_iterations = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        for (key, s) in [("size", self.size), ("bench_size", self.bench_size)] {
            if s == 0 || s % INPUT_MULTIPLE != 0 {
                return fail(format!("{key} must be a positive multiple of {INPUT_MULTIPLE}, got {s}"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.bench_iterations == 0 {
            return fail("bench_iterations must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (key, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{key} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return fail(format!("eps must be positive, got {}", self.eps));
        }
        self.loss_config().validate()
    }

    /// Loss settings with unit class weights; training replaces the weights
    /// when `class_weights = inverse`.
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            focal_gamma: self.focal_gamma,
            lambda: self.lambda,
            dice_smooth: self.dice_smooth,
            ..LossConfig::default()
        }
    }

    pub fn bench_protocol(&self) -> BenchProtocol {
        BenchProtocol {
            warmup: self.bench_warmup,
            iterations: self.bench_iterations,
        }
    }

    /// Config text that parses back to `self` (paths written as given).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a string");
        kv("seed", self.seed.to_string());
        kv("variant", self.variant.to_string());
        kv("dataset", self.dataset.display().to_string());
        kv("out", self.out.display().to_string());
        kv("size", self.size.to_string());
        kv("counts", self.counts.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", self.lr.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("eps", self.eps.to_string());
        kv("lambda", self.lambda.to_string());
        kv("focal_gamma", self.focal_gamma.to_string());
        kv("dice_smooth", self.dice_smooth.to_string());
        kv("class_weights", self.class_weights.name().to_string());
        kv("augment", self.augment.to_string());
        kv("bench_size", self.bench_size.to_string());
        kv("bench_warmup", self.bench_warmup.to_string());
        kv("bench_iterations", self.bench_iterations.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = TrainConfig::default();
        assert_eq!((cfg.lr, cfg.batch_size, cfg.epochs), (1e-3, 16, 20));
        assert_eq!((cfg.weight_decay, cfg.beta1, cfg.beta2), (1e-2, 0.9, 0.999));
        assert_eq!(TrainConfig::parse(&cfg.to_text(), Path::new("")).unwrap(), cfg);
        assert_eq!(cfg.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn comments_paths_and_errors() {
        let cfg = TrainConfig::parse("# run\nseed = 7 # inline\n\ndataset = d\n", Path::new("/base")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.dataset, PathBuf::from("/base/d"));
        for bad in ["colour = red", "seed 7", "seed = x", "variant = big", "size = 48", "seed = 1\nseed = 2"] {
            let e = TrainConfig::parse(bad, Path::new("")).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
    }
}
