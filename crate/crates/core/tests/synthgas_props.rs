//! Generator, augmentation and dataset properties.

use std::collections::{BTreeMap, HashSet};

use fume::net::Modality;
use fume::synthgas::{
    apply_augment, augment, build_dataset, map_ph_to_class, plan_dataset, split_counts, synth_pair, tube_rect,
    AugmentParams, Dataset, DatasetManifest, GasFramePair, HealthLabel, PhCounts, Split, GAS, MANIFEST_FILE, TUBE,
    TUBE_INTENSITY,
};
use proptest::prelude::*;

const LEVELS: [f64; 6] = [6.5, 6.2, 5.9, 5.6, 5.3, 5.0];

fn gas_mean(pair: &GasFramePair, m: Modality) -> f64 {
    let (f, k) = (pair.frame(m), pair.mask(m));
    let gas: Vec<f64> = f.data().iter().zip(k.data()).filter(|(_, &l)| l == GAS).map(|(&v, _)| v as f64).collect();
    gas.iter().sum::<f64>() / gas.len() as f64
}

#[test]
fn labels_follow_thresholds() {
    assert_eq!(map_ph_to_class(6.5).unwrap(), HealthLabel::Healthy);
    assert_eq!(map_ph_to_class(6.0).unwrap(), HealthLabel::Healthy);
    assert_eq!(map_ph_to_class(5.9).unwrap(), HealthLabel::Transitional);
    assert_eq!(map_ph_to_class(5.8).unwrap(), HealthLabel::Transitional);
    assert_eq!(map_ph_to_class(5.79).unwrap(), HealthLabel::Acidotic);
    assert!(map_ph_to_class(3.9).is_err());
    assert!(map_ph_to_class(f64::NAN).is_err());
}

#[test]
fn frames_and_masks_agree() {
    let size = 64;
    let (x0, x1, y0) = tube_rect(size);
    for &ph in &LEVELS {
        for seed in 0..20 {
            let p = synth_pair(ph, seed, size).unwrap();
            assert_eq!(p.label, map_ph_to_class(ph).unwrap());
            for m in Modality::BOTH {
                let (f, k) = (p.frame(m), p.mask(m));
                if !p.is_present(m) {
                    assert!(f.is_zero() && k.is_zero());
                    continue;
                }
                assert!(k.data().iter().all(|&l| l <= GAS));
                let frac = k.count(GAS) as f64 / (size * size) as f64;
                assert!((0.02..=0.10).contains(&frac), "ph {ph} seed {seed} {m:?}: {frac}");
                for y in 0..size {
                    for x in 0..size {
                        let tube = (x0..x1).contains(&x) && y >= y0;
                        assert_eq!(k.get(x, y) == TUBE, tube);
                    }
                }
                let bg: Vec<f64> =
                    f.data().iter().zip(k.data()).filter(|(_, &l)| l == 0).map(|(&v, _)| v as f64).collect();
                let mean = bg.iter().sum::<f64>() / bg.len() as f64;
                let sd = (bg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / bg.len() as f64).sqrt();
                let lowest = f.data().iter().zip(k.data()).filter(|(_, &l)| l == GAS).map(|(&v, _)| v).min().unwrap();
                assert!(lowest as f64 > mean + 2.0 * sd, "ph {ph} seed {seed} {m:?}");
            }
            assert!(p.is_present(Modality::Co2));
            let tube_px = p.frame(Modality::Co2).get((x0 + x1) / 2, size - 1) as f64;
            assert!((tube_px - TUBE_INTENSITY).abs() < 10.0);
        }
    }
}

#[test]
fn co2_brightens_and_ch4_fades_with_acidity() {
    let mean_over = |ph: f64, m: Modality| {
        let v: Vec<f64> = (0..100)
            .map(|s| synth_pair(ph, s, 64).unwrap())
            .filter(|p| p.is_present(m))
            .map(|p| gas_mean(&p, m))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_over(5.0, Modality::Co2) > mean_over(6.5, Modality::Co2));
    assert!(mean_over(5.0, Modality::Ch4) < mean_over(6.5, Modality::Ch4));
    let missing = |ph: f64| (0..200).filter(|&s| !synth_pair(ph, s, 64).unwrap().is_present(Modality::Ch4)).count();
    assert!(missing(5.0) > missing(6.5));
}

#[test]
fn threshold_baseline_beats_seventy_percent() {
    let data = |seeds: std::ops::Range<u64>| {
        let mut v = Vec::new();
        for &ph in &LEVELS {
            for s in seeds.clone() {
                let p = synth_pair(ph, s, 64).unwrap();
                v.push((gas_mean(&p, Modality::Co2), p.label.index()));
            }
        }
        v
    };
    // Brighter CO2 plumes mean lower pH: healthy < t1 <= transitional < t2 <= acidotic.
    let accuracy = |v: &[(f64, usize)], t1: f64, t2: f64| {
        let hits = v.iter().filter(|(x, l)| (if *x < t1 { 0 } else if *x < t2 { 1 } else { 2 }) == *l).count();
        hits as f64 / v.len() as f64
    };
    let fit = data(0..40);
    let mut cuts: Vec<f64> = fit.iter().map(|(x, _)| *x).collect();
    cuts.sort_by(f64::total_cmp);
    let mut best = (0.0, 0.0, 0.0);
    for (i, &t1) in cuts.iter().enumerate() {
        for &t2 in &cuts[i..] {
            let a = accuracy(&fit, t1, t2);
            if a > best.0 {
                best = (a, t1, t2);
            }
        }
    }
    let held_out = accuracy(&data(1000..1040), best.1, best.2);
    assert!(held_out > 0.70, "{held_out}");
}

#[test]
fn rotation_keeps_gas_area() {
    for seed in 0..100 {
        let p = synth_pair(LEVELS[seed as usize % 6], seed, 64).unwrap();
        let params = AugmentParams {
            angle_deg: AugmentParams::sample(seed).angle_deg,
            ..AugmentParams::IDENTITY
        };
        let r = apply_augment(&p, &params);
        for m in Modality::BOTH {
            if !p.is_present(m) {
                assert!(r.frame(m).is_zero());
                continue;
            }
            let (before, after) = (p.mask(m).count(GAS) as f64, r.mask(m).count(GAS) as f64);
            assert!((after - before).abs() <= 0.1 * before, "seed {seed} {m:?}: {before} -> {after}");
        }
    }
}

#[test]
fn augmentation_shares_geometry_across_streams() {
    let p = synth_pair(6.5, 3, 64).unwrap();
    assert!(p.is_present(Modality::Ch4));
    for seed in 0..10 {
        let a = augment(&p, seed);
        assert_eq!(a, augment(&p, seed));
        assert_eq!(a.label, p.label);
        let flipped = AugmentParams {
            flip: true,
            ..AugmentParams::IDENTITY
        };
        let f = apply_augment(&p, &flipped);
        for m in Modality::BOTH {
            assert_eq!(f.mask(m).get(0, 10), p.mask(m).get(63, 10));
            assert_eq!(f.frame(m).get(5, 40), p.frame(m).get(58, 40));
        }
    }
    // Both tube masks move together, so they stay identical after any draw.
    for seed in 0..20 {
        let a = augment(&p, seed);
        let tube = |m| a.mask(m).data().iter().map(|&l| l == TUBE).collect::<Vec<_>>();
        assert_eq!(tube(Modality::Co2), tube(Modality::Ch4));
    }
}

#[test]
fn splits_are_stratified_and_disjoint() {
    let counts = PhCounts::desk_default();
    let plan = plan_dataset(&counts, 5).unwrap();
    assert_eq!(plan.len(), counts.total());
    let ids: HashSet<_> = plan.iter().map(|p| p.id.clone()).collect();
    assert_eq!(ids.len(), plan.len());
    for &(ph, n) in &counts.0 {
        let mut per = [0usize; 3];
        for p in plan.iter().filter(|p| p.ph == ph) {
            per[Split::ALL.iter().position(|s| *s == p.split).unwrap()] += 1;
        }
        assert_eq!(per, split_counts(n));
        for (k, frac) in [0.70, 0.15, 0.15].iter().enumerate() {
            assert!((per[k] as f64 - frac * n as f64).abs() <= 1.0, "{ph}: {per:?}");
        }
    }
    let mut session_split = BTreeMap::new();
    for p in &plan {
        assert_eq!(*session_split.entry(p.session_seed).or_insert(p.split), p.split);
    }
    assert_eq!(split_counts(1008), [706, 151, 151]);
    assert!(plan_dataset(&PhCounts(vec![(6.5, 9)]), 0).is_err());
}

#[test]
fn dataset_on_disk_is_reproducible() {
    let counts: PhCounts = "6.5:12,5.9:10,5.0:11".parse().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = build_dataset(&counts, 9, 32, a.path()).unwrap();
    build_dataset(&counts, 9, 32, b.path()).unwrap();
    let text = std::fs::read(a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(text, std::fs::read(b.path().join(MANIFEST_FILE)).unwrap());
    assert_eq!(DatasetManifest::from_csv(std::str::from_utf8(&text).unwrap()).unwrap(), ma);
    for row in &ma.rows {
        for f in row.frames.iter().chain(&row.masks) {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }
    let loaded = Dataset::load(a.path()).unwrap();
    let memory = Dataset::generate(&counts, 9, 32).unwrap();
    assert_eq!(loaded.samples.len(), 33);
    for (x, y) in loaded.samples.iter().zip(&memory.samples) {
        assert_eq!((&x.id, x.split, &x.pair), (&y.id, y.split, &y.pair));
    }
    let other = tempfile::tempdir().unwrap();
    build_dataset(&counts, 10, 32, other.path()).unwrap();
    assert_ne!(text, std::fs::read(other.path().join(MANIFEST_FILE)).unwrap());
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = Dataset::load(dir.path().join("nowhere")).unwrap_err();
    assert_eq!(e.exit_code(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn label_is_a_two_step_function(ph in 4.0f64..=8.0) {
        let want = if ph >= 6.0 { HealthLabel::Healthy } else if ph >= 5.8 { HealthLabel::Transitional } else { HealthLabel::Acidotic };
        prop_assert_eq!(map_ph_to_class(ph).unwrap(), want);
    }

    #[test]
    fn split_counts_partition(n in 10usize..5000) {
        let c = split_counts(n);
        prop_assert_eq!(c.iter().sum::<usize>(), n);
        for (k, frac) in [0.70, 0.15, 0.15].iter().enumerate() {
            prop_assert!((c[k] as f64 - frac * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn augment_preserves_label_set(seed in any::<u64>(), ph in 5.0f64..6.5) {
        let p = synth_pair(ph, seed, 32).unwrap();
        let a = augment(&p, seed ^ 7);
        for m in Modality::BOTH {
            prop_assert!(a.mask(m).data().iter().all(|&l| l <= GAS));
            prop_assert_eq!(a.is_present(m), p.is_present(m));
            if !p.is_present(m) {
                prop_assert!(a.frame(m).is_zero());
            }
        }
    }
}
