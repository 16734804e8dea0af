//! Loss values against hand evaluation and finite differences.

use fume::kernels::{ops, Tensor};
use fume::losses::{
    blend, cross_entropy, dice_loss, dice_loss_backward, focal_loss, focal_loss_backward, inverse_frequency_weights,
    multitask_loss, one_hot, seg_loss, seg_loss_backward, total_loss, BatchTargets, LossConfig,
};
use fume::net::ForwardOutput;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_probs(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Tensor::uniform(shape, -2.0, 2.0, &mut rng);
    ops::softmax(&logits).unwrap()
}

fn random_targets(n: usize, classes: u8, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

#[test]
fn focal_without_focusing_is_cross_entropy() {
    for seed in 0..20 {
        let p = random_probs(&[4, 3, 5, 5], seed);
        let t = random_targets(100, 3, seed + 100);
        let f = focal_loss(&p, &t, &[1.0; 3], 0.0).unwrap();
        let ce = cross_entropy(&p, &t).unwrap();
        assert!((f - ce).abs() < 1e-12, "{f} {ce}");
    }
}

#[test]
fn focal_hand_values() {
    let p = Tensor::new(vec![2, 2], vec![0.5, 0.5, 1.0, 0.0]).unwrap();
    let l = focal_loss(&p, &[0, 0], &[1.0, 1.0], 2.0).unwrap();
    assert!((l - 0.25 * 2f64.ln() / 2.0).abs() < 1e-15);
    let zero = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
    let clamped = focal_loss(&zero, &[0], &[1.0, 1.0], 2.0).unwrap();
    assert!((clamped + 1e-12f64.ln()).abs() < 1e-9);
}

#[test]
fn total_loss_arithmetic() {
    assert_eq!(total_loss(Some(1.0), Some(2.0), Some(4.0), 0.5), 5.0);
    assert_eq!(total_loss(Some(1.0), None, Some(4.0), 0.5), 3.0);
    assert_eq!(blend(0.2, 0.4), 0.5 * 0.2 + 0.5 * 0.4);
}

#[test]
fn dice_extremes_and_toy_case() {
    let t = [0u8, 1, 1, 0];
    let oh = one_hot(&t, &[1, 2, 2, 2]).unwrap();
    assert!(dice_loss(&oh, &oh, 1.0).unwrap() < 1e-6);
    let flipped = one_hot(&[1, 0, 0, 1], &[1, 2, 2, 2]).unwrap();
    let d = dice_loss(&flipped, &oh, 1.0).unwrap();
    // Each class: (0 + 1) / (2 + 2 + 1).
    assert!((d - (1.0 - 0.2)).abs() < 1e-15);
    let soft = Tensor::new(vec![1, 2, 2, 2], vec![0.75, 0.25, 0.5, 1.0, 0.25, 0.75, 0.5, 0.0]).unwrap();
    // Class 0: inter 0.75 + 1.0, sums 2.5 + 2; class 1: inter 0.75 + 0.5, sums 1.5 + 2.
    let c0 = (2.0 * 1.75 + 1.0) / (2.5 + 2.0 + 1.0);
    let c1 = (2.0 * 1.25 + 1.0) / (1.5 + 2.0 + 1.0);
    assert!((dice_loss(&soft, &oh, 1.0).unwrap() - (1.0 - (c0 + c1) / 2.0)).abs() < 1e-15);
}

#[test]
fn inverse_weights_have_unit_mean() {
    let w = inverse_frequency_weights(&[800, 150, 50]);
    assert!((w.iter().sum::<f64>() / 3.0 - 1.0).abs() < 1e-15);
    assert!(w[0] < w[1] && w[1] < w[2]);
    let missing = inverse_frequency_weights(&[10, 0, 30]);
    assert_eq!(missing[1], missing[2].max(missing[0]));
    assert_eq!(inverse_frequency_weights(&[5, 5, 5]), [1.0; 3]);
}

/// Central finite difference of `f` at every coordinate of `p`.
fn numeric_grad(p: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..p.len())
        .map(|i| {
            let mut a = p.clone();
            let mut b = p.clone();
            a.data_mut()[i] += h;
            b.data_mut()[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn assert_close(analytic: &Tensor, numeric: &[f64]) {
    for (a, n) in analytic.data().iter().zip(numeric) {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        assert!(rel < 1e-5, "analytic {a} numeric {n}");
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    let cfg = LossConfig {
        seg_weights: [0.4, 1.1, 1.5],
        ..LossConfig::default()
    };
    for seed in 0..5 {
        let p = random_probs(&[2, 3, 3, 3], seed);
        let t = random_targets(18, 3, seed + 7);
        let w = [0.7, 1.0, 1.3];
        assert_close(
            &focal_loss_backward(&p, &t, &w, 2.0).unwrap(),
            &numeric_grad(&p, |q| focal_loss(q, &t, &w, 2.0).unwrap()),
        );
        let oh = one_hot(&t, p.shape()).unwrap();
        assert_close(
            &dice_loss_backward(&p, &oh, 1.0).unwrap(),
            &numeric_grad(&p, |q| dice_loss(q, &oh, 1.0).unwrap()),
        );
        assert_close(
            &seg_loss_backward(&p, &t, &cfg).unwrap(),
            &numeric_grad(&p, |q| seg_loss(q, &t, &cfg).unwrap()),
        );
    }
}

#[test]
fn multitask_gradient_reaches_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seg = [
        Tensor::uniform(&[2, 3, 2, 2], -1.0, 1.0, &mut rng),
        Tensor::uniform(&[2, 3, 2, 2], -1.0, 1.0, &mut rng),
    ];
    let cls = Tensor::uniform(&[2, 3], -1.0, 1.0, &mut rng);
    let masks = [random_targets(8, 3, 1), random_targets(8, 3, 2)];
    let present = [vec![true, true], vec![true, false]];
    let labels = vec![2u8, 0];
    let cfg = LossConfig::default();
    let loss_of = |seg: &[Tensor; 2], cls: &Tensor| {
        let out = ForwardOutput {
            seg: [Some(seg[0].clone()), Some(seg[1].clone())],
            class_logits: Some(cls.clone()),
        };
        let targets = BatchTargets {
            masks: [&masks[0], &masks[1]],
            present: [&present[0], &present[1]],
            labels: &labels,
        };
        multitask_loss(&out, &targets, &cfg).unwrap()
    };
    let (loss, grads) = loss_of(&seg, &cls);
    assert!((loss.total - (loss.seg[0] + loss.seg[1] + 0.5 * loss.cls)).abs() < 1e-15);
    // The absent second sample of the CH4 stream gets no gradient.
    let g1 = grads.seg[1].as_ref().unwrap();
    assert!(g1.data()[12..].iter().all(|&v| v == 0.0));
    for k in 0..2 {
        let numeric = numeric_grad(&seg[k], |q| {
            let mut s = seg.clone();
            s[k] = q.clone();
            loss_of(&s, &cls).0.total
        });
        assert_close(grads.seg[k].as_ref().unwrap(), &numeric);
    }
    assert_close(grads.cls.as_ref().unwrap(), &numeric_grad(&cls, |q| loss_of(&seg, q).0.total));
}

proptest! {
    #[test]
    fn focal_is_non_negative_and_decreasing(p in 0.001f64..0.998, d in 0.0005f64..0.001, gamma in 0.0f64..4.0) {
        let at = |p: f64| focal_loss(&Tensor::new(vec![1, 2], vec![p, 1.0 - p]).unwrap(), &[0], &[1.0, 1.0], gamma).unwrap();
        prop_assert!(at(p) >= 0.0);
        prop_assert!(at(p + d) < at(p));
    }

    #[test]
    fn dice_is_bounded(seed in any::<u64>()) {
        let p = random_probs(&[2, 3, 4, 4], seed);
        let oh = one_hot(&random_targets(32, 3, seed ^ 1), p.shape()).unwrap();
        let d = dice_loss(&p, &oh, 1.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn total_is_linear(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, l in 0.0f64..2.0) {
        let base = total_loss(Some(a), Some(b), Some(c), l);
        prop_assert!((total_loss(Some(a + 1.0), Some(b), Some(c), l) - base - 1.0).abs() < 1e-9);
        prop_assert!((total_loss(Some(a), Some(b + 1.0), Some(c), l) - base - 1.0).abs() < 1e-9);
        prop_assert!((total_loss(Some(a), Some(b), Some(c + 1.0), l) - base - l).abs() < 1e-9);
    }
}
