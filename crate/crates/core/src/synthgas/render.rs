//! Rendering of one synthetic frame pair.
//!
//! Each frame shows a fixed tube at the bottom centre and a plume rising
//! from its top, built from 3 to 6 anisotropic Gaussian blobs modulated by
//! value noise. The gas mask is the densest part of the plume, sized to a
//! pH-dependent fraction of the frame. Lower pH makes the CO2 plume larger
//! and brighter, the CH4 plume smaller, dimmer and more often missing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::label::{map_ph_to_class, HealthLabel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::net::{Modality, INPUT_MULTIPLE};

pub const BACKGROUND: u8 = 0;
pub const TUBE: u8 = 1;
pub const GAS: u8 = 2;

pub const TUBE_INTENSITY: f64 = 110.0;
const PIXEL_NOISE: f64 = 1.5;
const BACKGROUND_RIPPLE: f64 = 6.0;

/// Paired frames, label masks and the modality flags of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GasFramePair {
    /// Indexed by [`Modality::index`]; an absent stream is all zero.
    pub frames: [Image; 2],
    pub masks: [Image; 2],
    pub present: [bool; 2],
    pub ph: f64,
    pub label: HealthLabel,
}

impl GasFramePair {
    pub fn frame(&self, m: Modality) -> &Image {
        &self.frames[m.index()]
    }

    pub fn mask(&self, m: Modality) -> &Image {
        &self.masks[m.index()]
    }

    pub fn is_present(&self, m: Modality) -> bool {
        self.present[m.index()]
    }

    pub fn size(&self) -> usize {
        self.frames[0].width()
    }
}

/// Acidity in `[0, 1]`: 0 at pH 6.5 and above, 1 at pH 5.0 and below.
pub fn acidity(ph: f64) -> f64 {
    ((6.5 - ph) / 1.5).clamp(0.0, 1.0)
}

/// Target gas-pixel fraction of a present stream, before jitter.
pub fn gas_fraction(m: Modality, ph: f64) -> f64 {
    let a = acidity(ph);
    match m {
        Modality::Co2 => 0.03 + 0.05 * a,
        Modality::Ch4 => 0.055 - 0.015 * a,
    }
}

const FRACTION_JITTER: [f64; 2] = [0.005, 0.01];

/// Probability that the CH4 stream is missing.
pub fn ch4_absence_probability(ph: f64) -> f64 {
    0.1 + 0.4 * acidity(ph)
}

/// Tube rectangle `(x0, x1, y0)`; it spans rows `y0..size`.
pub fn tube_rect(size: usize) -> (usize, usize, usize) {
    let s = size as f64;
    ((0.40 * s).round() as usize, (0.60 * s).round() as usize, (0.70 * s).round() as usize)
}

/// Smooth noise in `[0, 1]` from a `cells x cells` lattice.
fn value_noise(size: usize, cells: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.random()).collect();
    let at = |i: usize, j: usize| lattice[j * (cells + 1) + i];
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = y as f64 * cells as f64 / size as f64;
        let (j, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..size {
            let fx = x as f64 * cells as f64 / size as f64;
            let (i, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
            let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Session-level nuisance shared by frames recorded together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub background_offset: f64,
    /// Horizontal shift of the plume source, in pixels.
    pub source_shift: f64,
}

impl Session {
    pub fn from_seed(seed: u64, size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e55_1011);
        Session {
            background_offset: rng.random_range(-5.0..5.0),
            source_shift: rng.random_range(-0.03..0.03) * size as f64,
        }
    }
}

fn plume_density(size: usize, session: &Session, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = size as f64;
    let (_, _, y0) = tube_rect(size);
    let top = y0 as f64;
    let blobs: Vec<[f64; 5]> = (0..rng.random_range(3..=6))
        .map(|_| {
            let u: f64 = rng.random_range(0.05..0.55);
            let drift = Normal::new(0.0, (0.04 + 0.08 * u) * s).expect("positive spread");
            [
                s / 2.0 + session.source_shift + drift.sample(rng),
                top * (1.0 - u),
                rng.random_range(0.04..0.10) * s * (1.0 + u),
                rng.random_range(0.03..0.07) * s,
                rng.random_range(0.6..1.0),
            ]
        })
        .collect();
    let turbulence = value_noise(size, 8, rng);
    let mut d = vec![0.0; size * size];
    for y in 0..y0.min(size) {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let v: f64 = blobs
                .iter()
                .map(|&[cx, cy, sx, sy, w]| {
                    w * (-((xf - cx).powi(2) / (2.0 * sx * sx) + (yf - cy).powi(2) / (2.0 * sy * sy))).exp()
                })
                .sum();
            d[y * size + x] = v * (0.6 + 0.8 * turbulence[y * size + x]);
        }
    }
    d
}

fn render_stream(
    m: Modality,
    ph: f64,
    size: usize,
    session: &Session,
    rng: &mut ChaCha8Rng,
) -> (Image, Image) {
    let a = acidity(ph);
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("positive sigma");
    let (x0, x1, y0) = tube_rect(size);
    let mut labels = vec![BACKGROUND; size * size];
    for y in y0..size {
        labels[y * size + x0..y * size + x1].fill(TUBE);
    }

    let density = plume_density(size, session, rng);
    let fraction = gas_fraction(m, ph) + rng.random_range(-1.0..1.0) * FRACTION_JITTER[m.index()];
    let k = (fraction * (size * size) as f64).round() as usize;
    let mut order: Vec<usize> = (0..size * size).filter(|&i| labels[i] == BACKGROUND && density[i] > 0.0).collect();
    order.sort_by(|&i, &j| density[j].total_cmp(&density[i]).then(i.cmp(&j)));
    order.truncate(k);
    for &i in &order {
        labels[i] = GAS;
    }
    let (dmin, dmax) = order
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(density[i]), hi.max(density[i])));

    let amplitude = match m {
        Modality::Co2 => 50.0 + 150.0 * a + Normal::new(0.0, 4.0).expect("sigma").sample(rng),
        Modality::Ch4 => 70.0 - 20.0 * a + Normal::new(0.0, 15.0).expect("sigma").sample(rng),
    }
    .max(10.0);
    let base = match m {
        Modality::Co2 => 40.0,
        Modality::Ch4 => 36.0,
    } + session.background_offset;
    let ripple = value_noise(size, 4, rng);

    let mut values = vec![0.0; size * size];
    for i in 0..size * size {
        let bg = base + BACKGROUND_RIPPLE * (ripple[i] - 0.5) + noise.sample(rng);
        values[i] = match labels[i] {
            TUBE => TUBE_INTENSITY + noise.sample(rng),
            GAS => {
                let rel = if dmax > dmin { (density[i] - dmin) / (dmax - dmin) } else { 1.0 };
                bg + amplitude * (0.6 + 0.4 * rel)
            }
            _ => bg,
        };
    }
    let quantize = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let mut pixels: Vec<u8> = values.iter().map(|&v| quantize(v)).collect();

    // Gas must stand clear of the background distribution.
    let bg: Vec<f64> = (0..size * size)
        .filter(|&i| labels[i] == BACKGROUND)
        .map(|i| pixels[i] as f64)
        .collect();
    let mean = bg.iter().sum::<f64>() / bg.len() as f64;
    let sd = (bg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / bg.len() as f64).sqrt();
    let floor = quantize((mean + 2.0 * sd + 1.0).ceil());
    for &i in &order {
        pixels[i] = pixels[i].max(floor);
    }
    (
        Image::new(size, size, pixels).expect("sized"),
        Image::new(size, size, labels).expect("sized"),
    )
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 || size % INPUT_MULTIPLE != 0 {
        return Err(Error::InvalidArgument(format!(
            "frame size {size} is not a positive multiple of {INPUT_MULTIPLE}"
        )));
    }
    Ok(())
}

/// One sample, with its own session.
pub fn synth_pair(ph: f64, seed: u64, size: usize) -> Result<GasFramePair> {
    check_size(size)?;
    synth_pair_in_session(ph, seed, &Session::from_seed(seed, size), size)
}

pub fn synth_pair_in_session(ph: f64, seed: u64, session: &Session, size: usize) -> Result<GasFramePair> {
    check_size(size)?;
    let label = map_ph_to_class(ph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch4_absent = rng.random::<f64>() < ch4_absence_probability(ph);
    let mut frames = Vec::new();
    let mut masks = Vec::new();
    for m in Modality::BOTH {
        let mut stream_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let (f, k) = render_stream(m, ph, size, session, &mut stream_rng);
        if m == Modality::Ch4 && ch4_absent {
            frames.push(Image::filled(size, size, 0));
            masks.push(Image::filled(size, size, BACKGROUND));
        } else {
            frames.push(f);
            masks.push(k);
        }
    }
    let [co2_frame, ch4_frame]: [Image; 2] = frames.try_into().expect("two streams");
    let [co2_mask, ch4_mask]: [Image; 2] = masks.try_into().expect("two streams");
    Ok(GasFramePair {
        frames: [co2_frame, ch4_frame],
        masks: [co2_mask, ch4_mask],
        present: [true, !ch4_absent],
        ph,
        label,
    })
}
