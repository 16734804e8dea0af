//! Region and boundary metrics against brute-force oracles.

use fume::image::Image;
use fume::metrics::{
    asd, classification_metrics, dice_coeff, distance_transform, hd95, iou, nearest_rank, ConfusionMatrix,
    EvalAccumulator, MetricsReport,
};
use fume::net::Modality;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{bits, mask, metric_oracle_sweep};

#[test]
fn every_3x3_pair_and_random_8x8_pairs_match_oracle() {
    assert_eq!(metric_oracle_sweep(), 512 * 512 + 1000);
}

#[test]
fn identical_masks_are_perfect() {
    let a = mask(4, 4, &bits(0b0110_0110_0000_0000, 16));
    assert_eq!(iou(&a, &a, 1), 1.0);
    assert_eq!(dice_coeff(&a, &a, 1), 1.0);
    assert_eq!(hd95(&a, &a, 1), Some(0.0));
    assert_eq!(asd(&a, &a, 1), Some(0.0));
}

#[test]
fn disjoint_masks_score_zero() {
    let a = mask(4, 1, &[true, false, false, false]);
    let b = mask(4, 1, &[false, false, false, true]);
    assert_eq!(iou(&a, &b, 1), 0.0);
    assert_eq!(dice_coeff(&a, &b, 1), 0.0);
    assert_eq!(hd95(&a, &b, 1), Some(3.0));
}

#[test]
fn nearest_rank_percentile() {
    let v: Vec<f64> = (1..=20).map(f64::from).collect();
    assert_eq!(nearest_rank(&v, 0.95), 19.0);
    assert_eq!(nearest_rank(&v, 1.0), 20.0);
    assert_eq!(nearest_rank(&[4.0], 0.95), 4.0);
}

#[test]
fn classification_from_confusion_counts() {
    let cm = ConfusionMatrix::from_counts([[8, 2, 0], [1, 3, 1], [0, 0, 5]]);
    let m = classification_metrics(&cm);
    assert!((m.accuracy - 16.0 / 20.0).abs() < 1e-15);
    let p = [8.0 / 9.0, 3.0 / 5.0, 5.0 / 6.0];
    let r = [8.0 / 10.0, 3.0 / 5.0, 5.0 / 5.0];
    for k in 0..3 {
        let f1 = 2.0 * p[k] * r[k] / (p[k] + r[k]);
        assert!((m.f1[k] - f1).abs() < 1e-15);
    }
    assert!((m.balanced_accuracy - (r[0] + r[1] + r[2]) / 3.0).abs() < 1e-15);
}

#[test]
fn report_layout_and_missing_cells() {
    let mut acc = EvalAccumulator::new();
    let gt = mask(4, 4, &bits(0xF0F0, 16)).data().iter().map(|v| v * 2).collect::<Vec<u8>>();
    let gt = Image::new(4, 4, gt).unwrap();
    acc.add_classification(1, None);
    acc.add_segmentation(Modality::Co2, &gt, &gt);
    acc.finish_sample();
    let r = acc.report();
    assert_eq!(r.accuracy, Some(0.0));
    assert_eq!(r.macro_f1, None);
    assert_eq!(r.iou[1], None);
    assert_eq!(r.gas_iou(Modality::Co2), Some(100.0));
    let header = MetricsReport::csv_header();
    assert!(header.starts_with("samples,accuracy,"));
    assert_eq!(header.split(',').count(), r.csv_row().split(',').count());
    assert!(r.to_text().contains("macro_f1=na"));
}

/// Brute-force nearest set pixel distance.
fn brute_edt(set: &[bool], w: usize, h: usize) -> Vec<f64> {
    (0..w * h)
        .map(|i| {
            (0..w * h)
                .filter(|&j| set[j])
                .map(|j| {
                    let dx = (i % w) as f64 - (j % w) as f64;
                    let dy = (i / w) as f64 - (j / w) as f64;
                    (dx * dx + dy * dy).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

proptest! {
    #[test]
    fn distance_transform_is_exact(w in 1usize..10, h in 1usize..10, seed in any::<u64>(), p in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set: Vec<bool> = (0..w * h).map(|_| rng.random_bool(p)).collect();
        prop_assert_eq!(distance_transform(&set, w, h), brute_edt(&set, w, h));
    }

    #[test]
    fn iou_and_dice_are_symmetric_and_ordered(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<bool> = (0..36).map(|_| rng.random_bool(0.3)).collect();
        let b: Vec<bool> = (0..36).map(|_| rng.random_bool(0.3)).collect();
        let (ma, mb) = (mask(6, 6, &a), mask(6, 6, &b));
        prop_assert_eq!(iou(&ma, &mb, 1), iou(&mb, &ma, 1));
        prop_assert!(iou(&ma, &mb, 1) <= dice_coeff(&ma, &mb, 1));
        prop_assert_eq!(hd95(&ma, &mb, 1), hd95(&mb, &ma, 1));
    }
}
