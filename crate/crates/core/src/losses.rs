//! Focal, Dice and the weighted multi-task objective.
//!
//! Every loss takes probabilities (`N x C x ...`, a distribution along axis
//! 1) and integer targets. The `*_backward` functions return the gradient
//! with respect to those probabilities; chain through
//! [`crate::kernels::ops::softmax_backward`] to reach logits.

use crate::error::{shape_err, Error, Result};
use crate::kernels::{ops, Tensor};
use crate::net::{ForwardOutput, Modality, NUM_CLASSES};

/// Probabilities are clamped here before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub focal_gamma: f64,
    /// Focal weights over background, tube, gas.
    pub seg_weights: [f64; NUM_CLASSES],
    /// Focal weights over healthy, transitional, acidotic.
    pub cls_weights: [f64; NUM_CLASSES],
    /// Weight of the classification term.
    pub lambda: f64,
    pub dice_smooth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            focal_gamma: 2.0,
            seg_weights: [1.0; NUM_CLASSES],
            cls_weights: [1.0; NUM_CLASSES],
            lambda: 0.5,
            dice_smooth: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = self
            .seg_weights
            .iter()
            .chain(&self.cls_weights)
            .all(|w| w.is_finite() && *w >= 0.0);
        if !weights_ok {
            return Err(Error::Config("class weights must be finite and non-negative".into()));
        }
        if !(self.dice_smooth > 0.0 && self.dice_smooth.is_finite()) {
            return Err(Error::Config(format!("dice smoothing must be positive, got {}", self.dice_smooth)));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma must be non-negative, got {}", self.focal_gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Inverse class frequencies normalized to mean 1. Classes that never occur
/// get the largest weight among the observed ones.
pub fn inverse_frequency_weights(counts: &[u64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return [1.0; NUM_CLASSES];
    }
    let raw: Vec<Option<f64>> = counts
        .iter()
        .map(|&c| (c > 0).then(|| total as f64 / c as f64))
        .collect();
    let fallback = raw.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let filled: Vec<f64> = raw.iter().map(|r| r.unwrap_or(fallback)).collect();
    let mean = filled.iter().sum::<f64>() / NUM_CLASSES as f64;
    std::array::from_fn(|c| filled[c] / mean)
}

/// `(n, classes, inner)` of a probability tensor checked against targets.
fn layout(probs: &Tensor, targets: &[u8]) -> Result<(usize, usize, usize)> {
    let s = probs.shape();
    if s.len() < 2 {
        return Err(shape_err!("probabilities need a class axis, got {:?}", s));
    }
    let (n, c) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    if targets.len() != n * inner {
        return Err(shape_err!("{} targets for probabilities {:?}", targets.len(), s));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= c) {
        return Err(Error::InvalidArgument(format!("target {t} outside {c} classes")));
    }
    Ok((n, c, inner))
}

fn focal_term(p: f64, alpha: f64, gamma: f64) -> f64 {
    -alpha * (1.0 - p).max(0.0).powf(gamma) * p.max(LOG_CLAMP).ln()
}

fn focal_slope(p: f64, alpha: f64, gamma: f64) -> f64 {
    let q = (1.0 - p).max(0.0);
    let log_part = if gamma == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) * p.max(LOG_CLAMP).ln() };
    let inv_part = if p > LOG_CLAMP { q.powf(gamma) / p } else { 0.0 };
    alpha * (log_part - inv_part)
}

/// Mean over elements of `-alpha_t (1 - p_t)^gamma log p_t`.
pub fn focal_loss(probs: &Tensor, targets: &[u8], weights: &[f64], gamma: f64) -> Result<f64> {
    let (n, c, inner) = layout(probs, targets)?;
    check_weights(weights, c)?;
    let p = probs.data();
    let mut total = 0.0;
    for s in 0..n {
        for i in 0..inner {
            let t = targets[s * inner + i] as usize;
            total += focal_term(p[(s * c + t) * inner + i], weights[t], gamma);
        }
    }
    Ok(total / (n * inner) as f64)
}

pub fn focal_loss_backward(probs: &Tensor, targets: &[u8], weights: &[f64], gamma: f64) -> Result<Tensor> {
    let (n, c, inner) = layout(probs, targets)?;
    check_weights(weights, c)?;
    let p = probs.data();
    let scale = 1.0 / (n * inner) as f64;
    let mut g = Tensor::zeros(probs.shape());
    for s in 0..n {
        for i in 0..inner {
            let t = targets[s * inner + i] as usize;
            let idx = (s * c + t) * inner + i;
            g.data_mut()[idx] = scale * focal_slope(p[idx], weights[t], gamma);
        }
    }
    Ok(g)
}

/// Mean negative log-likelihood of the targets.
pub fn cross_entropy(probs: &Tensor, targets: &[u8]) -> Result<f64> {
    let (n, c, inner) = layout(probs, targets)?;
    let p = probs.data();
    let mut total = 0.0;
    for s in 0..n {
        for i in 0..inner {
            let t = targets[s * inner + i] as usize;
            total -= p[(s * c + t) * inner + i].max(LOG_CLAMP).ln();
        }
    }
    Ok(total / (n * inner) as f64)
}

fn check_weights(weights: &[f64], classes: usize) -> Result<()> {
    if weights.len() != classes {
        return Err(shape_err!("{} class weights for {classes} classes", weights.len()));
    }
    Ok(())
}

/// One-hot encoding of `targets` with the class axis inserted at 1.
pub fn one_hot(targets: &[u8], shape: &[usize]) -> Result<Tensor> {
    let probe = Tensor::zeros(shape);
    let (n, c, inner) = layout(&probe, targets)?;
    let mut t = probe;
    for s in 0..n {
        for i in 0..inner {
            t.data_mut()[(s * c + targets[s * inner + i] as usize) * inner + i] = 1.0;
        }
    }
    Ok(t)
}

fn soft_layout(probs: &Tensor, targets: &Tensor) -> Result<(usize, usize, usize)> {
    let s = probs.shape();
    if s != targets.shape() || s.len() < 2 {
        return Err(shape_err!("dice operands {:?} and {:?}", s, targets.shape()));
    }
    Ok((s[0], s[1], s[2..].iter().product()))
}

/// Per-sample `1 - mean_c (2 sum(p t) + eps) / (sum(p) + sum(t) + eps)`,
/// averaged over the batch.
pub fn dice_loss(probs: &Tensor, one_hot_targets: &Tensor, smooth: f64) -> Result<f64> {
    let (n, c, inner) = soft_layout(probs, one_hot_targets)?;
    let (p, t) = (probs.data(), one_hot_targets.data());
    let mut total = 0.0;
    for s in 0..n {
        let mut coeff = 0.0;
        for k in 0..c {
            let r = (s * c + k) * inner..(s * c + k + 1) * inner;
            let inter: f64 = p[r.clone()].iter().zip(&t[r.clone()]).map(|(a, b)| a * b).sum();
            let sp: f64 = p[r.clone()].iter().sum();
            let st: f64 = t[r].iter().sum();
            coeff += (2.0 * inter + smooth) / (sp + st + smooth);
        }
        total += 1.0 - coeff / c as f64;
    }
    Ok(total / n as f64)
}

pub fn dice_loss_backward(probs: &Tensor, one_hot_targets: &Tensor, smooth: f64) -> Result<Tensor> {
    let (n, c, inner) = soft_layout(probs, one_hot_targets)?;
    let (p, t) = (probs.data(), one_hot_targets.data());
    let mut g = Tensor::zeros(probs.shape());
    let scale = 1.0 / (n * c) as f64;
    for s in 0..n {
        for k in 0..c {
            let r = (s * c + k) * inner..(s * c + k + 1) * inner;
            let inter: f64 = p[r.clone()].iter().zip(&t[r.clone()]).map(|(a, b)| a * b).sum();
            let den = p[r.clone()].iter().sum::<f64>() + t[r.clone()].iter().sum::<f64>() + smooth;
            let num = 2.0 * inter + smooth;
            for i in r {
                g.data_mut()[i] = -scale * (2.0 * t[i] * den - num) / (den * den);
            }
        }
    }
    Ok(g)
}

/// `0.5 * focal + 0.5 * dice`.
pub fn seg_loss(probs: &Tensor, targets: &[u8], cfg: &LossConfig) -> Result<f64> {
    let focal = focal_loss(probs, targets, &cfg.seg_weights, cfg.focal_gamma)?;
    let dice = dice_loss(probs, &one_hot(targets, probs.shape())?, cfg.dice_smooth)?;
    Ok(blend(focal, dice))
}

pub fn seg_loss_backward(probs: &Tensor, targets: &[u8], cfg: &LossConfig) -> Result<Tensor> {
    let mut g = focal_loss_backward(probs, targets, &cfg.seg_weights, cfg.focal_gamma)?;
    g.add_assign(&dice_loss_backward(probs, &one_hot(targets, probs.shape())?, cfg.dice_smooth)?)?;
    g.scale(0.5);
    Ok(g)
}

/// The fixed even blend of the focal and Dice terms.
pub fn blend(focal: f64, dice: f64) -> f64 {
    0.5 * focal + 0.5 * dice
}

/// Segmentation terms of absent streams are `None` and contribute nothing.
pub fn total_loss(seg_co2: Option<f64>, seg_ch4: Option<f64>, cls: Option<f64>, lambda: f64) -> f64 {
    seg_co2.unwrap_or(0.0) + seg_ch4.unwrap_or(0.0) + lambda * cls.unwrap_or(0.0)
}

/// Per-sample supervision for one batch.
#[derive(Debug, Clone)]
pub struct BatchTargets<'a> {
    /// `N x H x W` labels per stream, indexed by [`Modality::index`].
    pub masks: [&'a [u8]; 2],
    /// Stream availability per sample.
    pub present: [&'a [bool]; 2],
    pub labels: &'a [u8],
}

/// Batch-mean loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub seg: [f64; 2],
    pub cls: f64,
}

/// Gradients with respect to the network outputs (logits).
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub seg: [Option<Tensor>; 2],
    pub cls: Option<Tensor>,
}

/// Multi-task objective on raw network outputs: per sample
/// `m_co2 * seg_co2 + m_ch4 * seg_ch4 + lambda * cls`, averaged over the
/// batch, together with its gradient with respect to the logits.
pub fn multitask_loss(out: &ForwardOutput, targets: &BatchTargets, cfg: &LossConfig) -> Result<(LossBreakdown, OutputGrads)> {
    let n = targets.labels.len();
    let mut breakdown = LossBreakdown::default();
    let mut grads = OutputGrads { seg: [None, None], cls: None };
    for m in Modality::BOTH {
        let Some(logits) = out.seg(m) else { continue };
        let (bn, c, h, w) = logits.dims4()?;
        if bn != n || targets.masks[m.index()].len() != n * h * w || targets.present[m.index()].len() != n {
            return Err(shape_err!("{} targets do not match logits {:?}", m.key(), logits.shape()));
        }
        let probs = ops::softmax(logits)?;
        let mut gp = Tensor::zeros(probs.shape());
        let per = c * h * w;
        for s in 0..n {
            if !targets.present[m.index()][s] {
                continue;
            }
            let p = Tensor::new(vec![1, c, h, w], probs.data()[s * per..(s + 1) * per].to_vec())?;
            let t = &targets.masks[m.index()][s * h * w..(s + 1) * h * w];
            breakdown.seg[m.index()] += seg_loss(&p, t, cfg)? / n as f64;
            let mut g = seg_loss_backward(&p, t, cfg)?;
            g.scale(1.0 / n as f64);
            gp.data_mut()[s * per..(s + 1) * per].copy_from_slice(g.data());
        }
        grads.seg[m.index()] = Some(ops::softmax_backward(&probs, &gp)?);
    }
    if let Some(logits) = &out.class_logits {
        let probs = ops::softmax(logits)?;
        breakdown.cls = focal_loss(&probs, targets.labels, &cfg.cls_weights, cfg.focal_gamma)?;
        let mut gp = focal_loss_backward(&probs, targets.labels, &cfg.cls_weights, cfg.focal_gamma)?;
        gp.scale(cfg.lambda);
        grads.cls = Some(ops::softmax_backward(&probs, &gp)?);
    }
    breakdown.total = breakdown.seg[0] + breakdown.seg[1] + cfg.lambda * breakdown.cls;
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {breakdown:?}")));
    }
    Ok((breakdown, grads))
}
