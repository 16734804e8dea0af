//! Per-channel batch normalization over `N x C x ...` tensors.

use super::tensor::Tensor;
use crate::error::{shape_err, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Values kept from a training-mode forward for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased batch variance, used for the running-statistics update.
    pub var_unbiased: Vec<f64>,
}

fn layout(x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    let shape = x.shape();
    if shape.len() < 2 || shape[1] != channels {
        return Err(shape_err!(
            "batch norm over {} channels cannot take {:?}",
            channels,
            shape
        ));
    }
    let inner: usize = shape[2..].iter().product();
    Ok((shape[0], inner))
}

fn check_affine(gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    let c = gamma.len();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err!(
            "batch norm scale {:?} and shift {:?} must be equal vectors",
            gamma.shape(),
            beta.shape()
        ));
    }
    Ok(c)
}

/// Normalize with batch statistics.
pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, BatchNormCache)> {
    let c = check_affine(gamma, beta)?;
    let (n, inner) = layout(x, c)?;
    let m = (n * inner) as f64;
    let xd = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * inner;
            mean[ch] += xd[base..base + inner].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * inner;
            var[ch] += xd[base..base + inner]
                .iter()
                .map(|v| (v - mean[ch]).powi(2))
                .sum::<f64>();
        }
    }
    let var_unbiased: Vec<f64> = var
        .iter()
        .map(|v| if m > 1.0 { v / (m - 1.0) } else { 0.0 })
        .collect();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / m + eps).sqrt()).collect();

    let mut normalized = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let (g, b) = (gamma.data(), beta.data());
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * inner;
            for i in base..base + inner {
                let h = (xd[i] - mean[ch]) * inv_std[ch];
                normalized.data_mut()[i] = h;
                y.data_mut()[i] = g[ch] * h + b[ch];
            }
        }
    }
    Ok((
        y,
        BatchNormCache {
            normalized,
            inv_std,
            mean,
            var_unbiased,
        },
    ))
}

/// Gradients `(input, gamma, beta)` of a training-mode batch norm.
pub fn batch_norm_train_backward(
    grad_out: &Tensor,
    gamma: &Tensor,
    cache: &BatchNormCache,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c = gamma.len();
    let (n, inner) = layout(grad_out, c)?;
    let m = (n * inner) as f64;
    let dy = grad_out.data();
    let h = cache.normalized.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * inner;
            for i in base..base + inner {
                dgamma[ch] += dy[i] * h[i];
                dbeta[ch] += dy[i];
            }
        }
    }
    let mut dx = Tensor::zeros(grad_out.shape());
    let g = gamma.data();
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * inner;
            let k = g[ch] * cache.inv_std[ch] / m;
            for i in base..base + inner {
                dx.data_mut()[i] = k * (m * dy[i] - dbeta[ch] - h[i] * dgamma[ch]);
            }
        }
    }
    Ok((
        dx,
        Tensor::new(vec![c], dgamma)?,
        Tensor::new(vec![c], dbeta)?,
    ))
}

/// Normalize with running statistics.
pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let c = check_affine(gamma, beta)?;
    let (n, inner) = layout(x, c)?;
    let (g, b) = (gamma.data(), beta.data());
    let (rm, rv) = (running_mean.data(), running_var.data());
    let mut y = Tensor::zeros(x.shape());
    let xd = x.data();
    for s in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (rv[ch] + eps).sqrt();
            let base = (s * c + ch) * inner;
            for i in base..base + inner {
                y.data_mut()[i] = g[ch] * (xd[i] - rm[ch]) * inv + b[ch];
            }
        }
    }
    Ok(y)
}

pub fn batch_norm_eval_backward(
    x: &Tensor,
    grad_out: &Tensor,
    gamma: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<(Tensor, Tensor, Tensor)> {
    let c = gamma.len();
    let (n, inner) = layout(x, c)?;
    let (g, rm, rv) = (gamma.data(), running_mean.data(), running_var.data());
    let (xd, dy) = (x.data(), grad_out.data());
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (rv[ch] + eps).sqrt();
            let base = (s * c + ch) * inner;
            for i in base..base + inner {
                dx.data_mut()[i] = dy[i] * g[ch] * inv;
                dgamma[ch] += dy[i] * (xd[i] - rm[ch]) * inv;
                dbeta[ch] += dy[i];
            }
        }
    }
    Ok((
        dx,
        Tensor::new(vec![c], dgamma)?,
        Tensor::new(vec![c], dbeta)?,
    ))
}

/// Exponential moving update of running statistics (momentum weights the
/// new batch).
pub fn update_running_stats(
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    cache: &BatchNormCache,
    momentum: f64,
) {
    for (r, m) in running_mean.data_mut().iter_mut().zip(&cache.mean) {
        *r = (1.0 - momentum) * *r + momentum * m;
    }
    for (r, v) in running_var.data_mut().iter_mut().zip(&cache.var_unbiased) {
        *r = (1.0 - momentum) * *r + momentum * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_output_has_zero_mean_unit_variance() {
        let x = Tensor::new(vec![2, 1, 1, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (y, cache) = batch_norm_train(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), 0.0).unwrap();
        assert!(y.sum().abs() < 1e-12);
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 6.0;
        assert!((var - 1.0).abs() < 1e-12);
        assert!((cache.mean[0] - 3.5).abs() < 1e-15);
        assert!((cache.var_unbiased[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn running_update_uses_momentum() {
        let mut rm = Tensor::zeros(&[1]);
        let mut rv = Tensor::full(&[1], 1.0);
        let cache = BatchNormCache {
            normalized: Tensor::zeros(&[1, 1]),
            inv_std: vec![1.0],
            mean: vec![2.0],
            var_unbiased: vec![3.0],
        };
        update_running_stats(&mut rm, &mut rv, &cache, BN_MOMENTUM);
        assert!((rm.data()[0] - 0.2).abs() < 1e-15);
        assert!((rv.data()[0] - 1.2).abs() < 1e-15);
    }
}
