//! Oracles shared by the focused suites and the acceptance target.
#![allow(dead_code)]

use fume::image::Image;
use fume::kernels::conv::ConvSpec;
use fume::kernels::{grad_check, ForwardOptions, GradCheckOptions, GradCheckReport, GraphBuilder, ParamStore, Probe, Tensor, PPM_SCALES};
use fume::metrics::{asd, dice_coeff, hd95, iou};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn mask(w: usize, h: usize, bits: &[bool]) -> Image {
    Image::new(w, h, bits.iter().map(|&b| b as u8).collect()).unwrap()
}

pub fn oracle_iou_dice(a: &[bool], b: &[bool]) -> (f64, f64) {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let na = a.iter().filter(|x| **x).count();
    let nb = b.iter().filter(|x| **x).count();
    let union = na + nb - inter;
    if union == 0 {
        return (1.0, 1.0);
    }
    (inter as f64 / union as f64, 2.0 * inter as f64 / (na + nb) as f64)
}

/// Edge pixels: set pixels on the image border or with an unset 4-neighbour.
pub fn oracle_edge(a: &[bool], w: usize, h: usize) -> Vec<(i64, i64)> {
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && a[y as usize * w + x as usize];
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if at(x, y) && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !at(x + dx, y + dy)) {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn oracle_distances(a: &[bool], b: &[bool], w: usize, h: usize) -> Option<Vec<f64>> {
    let (ea, eb) = (oracle_edge(a, w, h), oracle_edge(b, w, h));
    if ea.is_empty() || eb.is_empty() {
        return None;
    }
    let nearest = |p: &(i64, i64), set: &[(i64, i64)]| {
        set.iter()
            .map(|q| (((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let mut d: Vec<f64> = ea.iter().map(|p| nearest(p, &eb)).collect();
    d.extend(eb.iter().map(|p| nearest(p, &ea)));
    Some(d)
}

pub fn oracle_hd95(d: &[f64]) -> f64 {
    let mut v = d.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (0.95 * v.len() as f64).ceil() as usize;
    v[rank.max(1) - 1]
}

pub fn check_pair(a: &[bool], b: &[bool], w: usize, h: usize) {
    let (ma, mb) = (mask(w, h, a), mask(w, h, b));
    let (oi, od) = oracle_iou_dice(a, b);
    assert_eq!(iou(&ma, &mb, 1), oi, "iou {a:?} {b:?}");
    assert_eq!(dice_coeff(&ma, &mb, 1), od, "dice {a:?} {b:?}");
    match oracle_distances(a, b, w, h) {
        None => {
            assert_eq!(hd95(&ma, &mb, 1), None);
            assert_eq!(asd(&ma, &mb, 1), None);
        }
        Some(d) => {
            let h95 = hd95(&ma, &mb, 1).unwrap();
            let mean = asd(&ma, &mb, 1).unwrap();
            assert!((h95 - oracle_hd95(&d)).abs() < 1e-9, "hd95 {a:?} {b:?}");
            assert!((mean - d.iter().sum::<f64>() / d.len() as f64).abs() < 1e-9, "asd {a:?} {b:?}");
        }
    }
}

pub fn bits(code: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| code >> i & 1 == 1).collect()
}


/// Every pair of 3x3 masks, then 1000 random 8x8 pairs.
pub fn metric_oracle_sweep() -> usize {
    let mut pairs = 0;
    for x in 0..512u32 {
        for y in 0..512u32 {
            check_pair(&bits(x, 9), &bits(y, 9), 3, 3);
            pairs += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let density = rng.random_range(0.05..0.8);
        let a: Vec<bool> = (0..64).map(|_| rng.random_bool(density)).collect();
        let b: Vec<bool> = (0..64).map(|_| rng.random_bool(density)).collect();
        check_pair(&a, &b, 8, 8);
        pairs += 1;
    }
    pairs
}

pub fn randomize_norms(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = store.iter().map(|(_, e)| e.name.clone()).collect();
    for n in names {
        let t = store.by_name_mut(&n).unwrap();
        let (lo, hi) = match n.rsplit('.').next().unwrap() {
            "gamma" | "running_var" => (0.5, 1.5),
            "beta" | "running_mean" => (-0.3, 0.3),
            _ => continue,
        };
        for v in t.data_mut() {
            *v = rng.random_range(lo..hi);
        }
    }
}

/// Build a one-kernel graph, then check parameter and input gradients.
fn check(name: &'static str, inputs: Vec<Tensor>, mode: ForwardOptions, build: impl FnOnce(&mut GraphBuilder, &[fume::kernels::NodeId])) -> (&'static str, GradCheckReport) {
    let mut store = ParamStore::new();
    let mut b = GraphBuilder::new(&mut store, 17);
    let ids: Vec<_> = (0..inputs.len()).map(|k| b.input(&format!("in{k}"))).collect();
    build(&mut b, &ids);
    let g = b.finish();
    randomize_norms(&mut store, 18);
    let opts = GradCheckOptions {
        samples: 12,
        forward: mode,
        inputs: true,
        probe: Probe::Projection { seed: 3 },
        ..GradCheckOptions::default()
    };
    (name, grad_check(&g, &mut store, &inputs, &opts).unwrap())
}

/// One small graph per kernel, checked against central differences.
pub fn kernel_grad_suite() -> Vec<(&'static str, GradCheckReport)> {
    let mut out = Vec::new();
    let eval = ForwardOptions::eval();
    let train = ForwardOptions::train(4);
    let x = || rand_tensor(&[2, 4, 6, 6], 50);
    out.push(check("conv", vec![x()], eval, |b, i| {
        let y = b.conv("c", i[0], ConvSpec::new(4, 3, 3, 2), true).unwrap();
        b.output("y", y);
    }));
    out.push(check("grouped conv", vec![x()], eval, |b, i| {
        let y = b.conv("c", i[0], ConvSpec::new(4, 6, 3, 1).with_groups(2), false).unwrap();
        b.output("y", y);
    }));
    out.push(check("dsconv", vec![x()], eval, |b, i| {
        let y = b.dsconv("ds", i[0], 4, 5, 2).unwrap();
        b.output("y", y);
    }));
    out.push(check("inverted residual", vec![x()], eval, |b, i| {
        let y = b.inverted_residual("ir", i[0], 4, 4, 2, 1).unwrap();
        b.output("y", y);
    }));
    out.push(check("batch norm train", vec![x()], train, |b, i| {
        let y = b.batch_norm("bn", i[0], 4).unwrap();
        b.output("y", y);
    }));
    out.push(check("batch norm eval", vec![x()], eval, |b, i| {
        let y = b.batch_norm("bn", i[0], 4).unwrap();
        b.output("y", y);
    }));
    out.push(check("relu sigmoid softmax", vec![x()], eval, |b, i| {
        let r = b.relu(i[0]);
        let s = b.sigmoid(r);
        let m = b.softmax(s);
        b.output("y", m);
    }));
    out.push(check("resize pool", vec![x()], eval, |b, i| {
        let up = b.resize("up", i[0], 11, 9);
        let p = b.adaptive_avg_pool("pool", up, 4);
        let g = b.global_avg_pool("gap", p);
        b.output("p", p);
        b.output("g", g);
    }));
    out.push(check("linear dropout", vec![rand_tensor(&[3, 5], 51)], train, |b, i| {
        let l = b.linear("fc", i[0], 5, 4).unwrap();
        let d = b.dropout("drop", l, 0.7);
        b.output("y", d);
    }));
    out.push(check("add concat scale", vec![x(), x().map(|v| v * 0.5), rand_tensor(&[2, 8], 52)], eval, |b, i| {
        let a = b.add("a", i[0], i[1]);
        let c = b.concat("c", &[a, i[1]]);
        let s = b.scale_channels("s", c, i[2]);
        b.output("y", s);
    }));
    out.push(check("batch concat slice", vec![x(), x().map(|v| -v)], eval, |b, i| {
        let c = b.concat_batch("cb", &[i[0], i[1]]);
        let y = b.conv("c", c, ConvSpec::pointwise(4, 2), false).unwrap();
        let s = b.slice_batch("s", y, 1, 2);
        b.output("y", s);
    }));
    out.push(check("attention", vec![rand_tensor(&[2, 8, 3, 3], 53), rand_tensor(&[2, 8, 2, 2], 54)], eval, |b, i| {
        let q = b.conv("q", i[0], ConvSpec::pointwise(8, 2), true).unwrap();
        // A key bias shifts every score of a query equally, so its gradient is zero.
        let k = b.conv("k", i[1], ConvSpec::pointwise(8, 2), false).unwrap();
        let v = b.conv("v", i[1], ConvSpec::pointwise(8, 8), true).unwrap();
        let a = b.attention("attn", q, k, v);
        let g = b.gated_residual("gate", i[0], a).unwrap();
        b.output("y", g);
    }));
    out.push(check("pyramid pooling", vec![rand_tensor(&[2, 8, 6, 6], 55)], eval, |b, i| {
        let y = b.ppm("ppm", i[0], 8, &PPM_SCALES).unwrap();
        b.output("y", y);
    }));
    out
}
