use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::GasFramePair;
use crate::image::Image;

pub const MAX_ROTATION_DEG: f64 = 15.0;

/// One draw of the augmentation. The geometric part is shared by both
/// streams and their masks; intensity jitter is drawn per stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub angle_deg: f64,
    pub scale: [f64; 2],
    pub shift: [f64; 2],
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        flip: false,
        angle_deg: 0.0,
        scale: [1.0; 2],
        shift: [0.0; 2],
    };

    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AugmentParams {
            flip: rng.random_bool(0.5),
            angle_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
            scale: [rng.random_range(0.9..=1.1), rng.random_range(0.9..=1.1)],
            shift: [rng.random_range(-10.0..=10.0), rng.random_range(-10.0..=10.0)],
        }
    }
}

/// Random flip, rotation and intensity jitter.
pub fn augment(pair: &GasFramePair, seed: u64) -> GasFramePair {
    apply_augment(pair, &AugmentParams::sample(seed))
}

/// Source coordinate of output pixel `(x, y)` under flip then rotation about
/// the image centre.
fn source(x: usize, y: usize, w: usize, h: usize, p: &AugmentParams) -> (f64, f64) {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
    let (s, c) = p.angle_deg.to_radians().sin_cos();
    let sx = c * dx + s * dy + cx;
    let sy = -s * dx + c * dy + cy;
    let sx = if p.flip { w as f64 - 1.0 - sx } else { sx };
    (sx, sy)
}

fn warp(img: &Image, p: &AugmentParams, nearest: bool) -> Image {
    let (w, h) = (img.width(), img.height());
    let clamp = |v: f64, hi: usize| v.clamp(0.0, hi as f64 - 1.0);
    let mut out = Image::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(x, y, w, h, p);
            let (sx, sy) = (clamp(sx, w), clamp(sy, h));
            let v = if nearest {
                img.get(sx.round() as usize, sy.round() as usize)
            } else {
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
                let g = |x, y| img.get(x, y) as f64;
                let top = g(x0, y0) * (1.0 - tx) + g(x1, y0) * tx;
                let bottom = g(x0, y1) * (1.0 - tx) + g(x1, y1) * tx;
                (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8
            };
            out.set(x, y, v);
        }
    }
    out
}

pub fn apply_augment(pair: &GasFramePair, p: &AugmentParams) -> GasFramePair {
    let mut out = pair.clone();
    for k in 0..2 {
        if !pair.present[k] {
            continue;
        }
        let mut frame = warp(&pair.frames[k], p, false);
        for v in frame.data_mut() {
            *v = (*v as f64 * p.scale[k] + p.shift[k]).round().clamp(0.0, 255.0) as u8;
        }
        out.frames[k] = frame;
        out.masks[k] = warp(&pair.masks[k], p, true);
    }
    out
}
