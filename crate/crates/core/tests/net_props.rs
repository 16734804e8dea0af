//! Structural properties of the assembled network.

use fume::harness::{compute_step, Batch};
use fume::image::Image;
use fume::kernels::{ForwardOptions, Tensor};
use fume::losses::LossConfig;
use fume::net::{checkpoint, BuildOptions, FumeNet, Modality, Variant, HIGH_CHANNELS, LOW_CHANNELS};
use fume::synthgas::{synth_pair, GasFramePair};
use fume::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frames(n: usize, size: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[n, 1, size, size], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn encoder_shapes_at_reference_size() {
    let net = FumeNet::build(Variant::Fume, 1).unwrap();
    let (low, high) = net.encode(&frames(1, 512, 2)).unwrap();
    assert_eq!(low.shape(), &[1, LOW_CHANNELS, 64, 64]);
    assert_eq!(high.shape(), &[1, HIGH_CHANNELS, 16, 16]);
}

#[test]
fn frames_must_be_multiples_of_32() {
    let net = FumeNet::build(Variant::Fume, 1).unwrap();
    let x = frames(1, 48, 3);
    assert!(matches!(net.forward(&x, &x), Err(Error::Shape(_))));
    assert!(net.forward(&frames(1, 64, 3), &frames(1, 32, 3)).is_err());
}

#[test]
fn both_streams_share_one_encoder() {
    let net = FumeNet::build(Variant::Fume, 4).unwrap();
    let names: Vec<&str> = net.params().iter().map(|(_, e)| e.name.as_str()).collect();
    assert!(names.iter().any(|n| n.starts_with("enc.")));
    assert!(!names.iter().any(|n| n.contains("co2") && n.starts_with("enc")));
    let (co2, ch4) = (frames(2, 64, 5), frames(2, 64, 6));
    let tape = net.forward_tape(&co2, &ch4, ForwardOptions::eval()).unwrap();
    for (m, x) in [(Modality::Co2, &co2), (Modality::Ch4, &ch4)] {
        let (low, high) = net.encode(x).unwrap();
        assert_eq!(net.tap(&tape, &format!("{}.low", m.key())).unwrap(), &low);
        assert_eq!(net.tap(&tape, &format!("{}.high", m.key())).unwrap(), &high);
    }
}

#[test]
fn zero_gates_reproduce_attention_free_graph() {
    for variant in [Variant::Fume, Variant::SegmentationOnly, Variant::Co2Only] {
        let with = FumeNet::build(variant, 7).unwrap();
        let without = FumeNet::build_with(variant, 7, BuildOptions { self_attention: false }).unwrap();
        let (a, b) = (frames(2, 64, 8), frames(2, 64, 9));
        assert_eq!(with.forward(&a, &b).unwrap(), without.forward(&a, &b).unwrap(), "{variant}");
        assert!(with.param_count() > without.param_count());
    }
}

#[test]
fn fusion_gates_are_open_interval() {
    let net = FumeNet::build(Variant::Fume, 10).unwrap();
    let tape = net.forward_tape(&frames(3, 64, 11), &frames(3, 64, 12), ForwardOptions::eval()).unwrap();
    let g = net.tap(&tape, "fusion.gates").unwrap();
    assert_eq!(g.shape(), &[3, 2 * HIGH_CHANNELS]);
    assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn variant_parameter_counts_are_ordered() {
    let count = |v| FumeNet::build(v, 0).unwrap().param_count();
    let fume = count(Variant::Fume);
    assert!(count(Variant::ClassificationOnly) < count(Variant::SegmentationOnly));
    assert!(count(Variant::SegmentationOnly) < fume);
    assert!(fume < count(Variant::FullCrossModalAttn));
    assert!(count(Variant::SelfAttnOnly) < fume);
    assert_eq!(count(Variant::Co2Only), count(Variant::Ch4Only));
}

#[test]
fn variant_heads_match_their_tasks() {
    let (a, b) = (frames(1, 64, 13), frames(1, 64, 14));
    for v in Variant::ALL {
        let out = FumeNet::build(v, 0).unwrap().forward(&a, &b).unwrap();
        assert_eq!(out.class_logits.is_some(), v.has_classification(), "{v}");
        for m in Modality::BOTH {
            assert_eq!(out.seg(m).is_some(), v.has_segmentation() && v.uses(m), "{v} {m:?}");
        }
        if let Some(s) = out.seg(Modality::Co2).or(out.seg(Modality::Ch4)) {
            assert_eq!(s.shape(), &[1, 3, 64, 64]);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.fume");
    let mut net = FumeNet::build(Variant::FullCrossModalAttn, 15).unwrap();
    net.params_mut().by_name_mut("attn_co2.gamma").unwrap().data_mut()[0] = 0.3;
    checkpoint::save(&net, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.variant(), net.variant());
    let (a, b) = (frames(2, 64, 16), frames(2, 64, 17));
    assert_eq!(back.forward(&a, &b).unwrap(), net.forward(&a, &b).unwrap());
    std::fs::write(&path, b"not a checkpoint").unwrap();
    let e = checkpoint::load(&path).unwrap_err();
    assert!(matches!(e, Error::Checkpoint(_)));
    assert_eq!(e.exit_code(), 5);
}

#[test]
fn ch4_only_tolerates_blank_frames() {
    let net = FumeNet::build(Variant::Ch4Only, 18).unwrap();
    let zero = Tensor::zeros(&[2, 1, 64, 64]);
    let out = net.forward(&frames(2, 64, 19), &zero).unwrap();
    for t in out.seg.iter().flatten().chain(out.class_logits.iter()) {
        assert!(t.data().iter().all(|v| v.is_finite()));
    }
}

fn pairs(seed: u64) -> Vec<GasFramePair> {
    [6.5, 5.9, 5.0].iter().enumerate().map(|(i, &ph)| synth_pair(ph, seed + i as u64, 64).unwrap()).collect()
}

fn step_grads(net: &FumeNet, pairs: &[GasFramePair], loss: &LossConfig) -> Vec<(String, f64)> {
    let refs: Vec<&GasFramePair> = pairs.iter().collect();
    let batch = Batch::new((0..pairs.len()).map(|i| i.to_string()).collect(), &refs).unwrap();
    let (_, grads, _) = compute_step(net, &batch, loss, 3).unwrap();
    grads.iter().map(|(id, g)| (net.params().entry(id).name.clone(), g.max_abs())).collect()
}

#[test]
fn zero_lambda_leaves_head_untouched() {
    let net = FumeNet::build(Variant::Fume, 20).unwrap();
    let loss = LossConfig {
        lambda: 0.0,
        ..LossConfig::default()
    };
    let grads = step_grads(&net, &pairs(21), &loss);
    let head: Vec<_> = grads.iter().filter(|(n, _)| n.starts_with("head.") || n.starts_with("fusion.")).collect();
    assert!(head.iter().all(|(_, g)| *g == 0.0), "{head:?}");
    assert!(grads.iter().any(|(n, g)| n.starts_with("dec_") && *g > 0.0));
}

#[test]
fn absent_streams_do_not_train_their_decoder() {
    let net = FumeNet::build(Variant::Fume, 22).unwrap();
    let mut ps = pairs(23);
    for p in &mut ps {
        p.present[1] = false;
        p.frames[1] = Image::filled(64, 64, 0);
        p.masks[1] = Image::filled(64, 64, 0);
    }
    let grads = step_grads(&net, &ps, &LossConfig::default());
    assert!(grads.iter().filter(|(n, _)| n.starts_with("dec_ch4")).all(|(_, g)| *g == 0.0));
    assert!(grads.iter().any(|(n, g)| n.starts_with("dec_co2") && *g > 0.0));
    assert!(grads.iter().any(|(n, g)| n.starts_with("head.") && *g > 0.0));
}

#[test]
fn eval_forward_is_deterministic_and_batch_independent() {
    let net = FumeNet::build(Variant::Fume, 24).unwrap();
    let (a, b) = (frames(2, 64, 25), frames(2, 64, 26));
    let both = net.forward(&a, &b).unwrap();
    assert_eq!(both, net.forward(&a, &b).unwrap());
    let first = |t: &Tensor| Tensor::new(vec![1, 1, 64, 64], t.data()[..4096].to_vec()).unwrap();
    let one = net.forward(&first(&a), &first(&b)).unwrap();
    let logits = both.class_logits.unwrap();
    let single = one.class_logits.unwrap();
    for k in 0..3 {
        assert!((logits.data()[k] - single.data()[k]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn output_shapes_follow_input(n in 1usize..3, h in 1usize..4, w in 1usize..4, seed in any::<u64>()) {
        let net = FumeNet::build(Variant::Fume, seed).unwrap();
        let x = Tensor::uniform(&[n, 1, 32 * h, 32 * w], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let out = net.forward(&x, &x).unwrap();
        for m in Modality::BOTH {
            prop_assert_eq!(out.seg(m).unwrap().shape().to_vec(), vec![n, 3, 32 * h, 32 * w]);
        }
        prop_assert_eq!(out.class_logits.unwrap().shape().to_vec(), vec![n, 3]);
    }
}
