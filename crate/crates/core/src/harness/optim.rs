//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use std::f64::consts::PI;

use crate::kernels::{Grads, ParamKind, ParamStore, Tensor};

/// Learning rate at step `t` of `total`: `lr0 * (1 + cos(pi t / T)) / 2`.
pub fn cosine_lr(lr0: f64, t: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * (1.0 + (PI * t as f64 / total as f64).cos()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Tensor,
    v: Tensor,
    steps: i32,
}

/// Optimizer state for one parameter store. Parameters that receive no
/// gradient in a step are left untouched, decay included.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    state: Vec<Option<Moments>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        AdamW {
            cfg,
            state: vec![None; store.len()],
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        let AdamWConfig {
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        for (id, g) in grads.iter() {
            let entry = store.entry(id);
            if entry.kind != ParamKind::Trainable || entry.frozen {
                continue;
            }
            let st = self.state[id.index()].get_or_insert_with(|| Moments {
                m: Tensor::zeros(g.shape()),
                v: Tensor::zeros(g.shape()),
                steps: 0,
            });
            st.steps += 1;
            let c1 = 1.0 - beta1.powi(st.steps);
            let c2 = 1.0 - beta2.powi(st.steps);
            let p = store.value_mut(id).data_mut();
            let (m, v) = (st.m.data_mut(), st.v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                p[i] *= 1.0 - lr * weight_decay;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 100), 1e-3);
        assert!((cosine_lr(1e-3, 50, 100) - 5e-4).abs() < 1e-18);
        assert!(cosine_lr(1e-3, 100, 100).abs() < 1e-18);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::full(&[2], 1.0), ParamKind::Trainable).unwrap();
        let mut grads = Grads::new(store.len());
        grads.accumulate(id, Tensor::new(vec![2], vec![3.0, -0.5]).unwrap()).unwrap();
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, &store);
        opt.step(&mut store, &grads, 0.1);
        let w = store.value(id).data();
        assert!((w[0] - 0.9).abs() < 1e-7 && (w[1] - 1.1).abs() < 1e-7, "{w:?}");
    }
}
