//! Mini-batches and seed derivation for training and evaluation.

use crate::error::Result;
use crate::image::Image;
use crate::kernels::Tensor;
use crate::losses::BatchTargets;
use crate::net::NUM_CLASSES;
use crate::synthgas::GasFramePair;

/// Frames as `N x 1 x H x W` tensors scaled to `[0, 1]`, plus targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<String>,
    pub frames: [Tensor; 2],
    /// Row-major `N x H x W` labels per stream.
    pub masks: [Vec<u8>; 2],
    pub present: [Vec<bool>; 2],
    pub labels: Vec<u8>,
    pub size: usize,
}

fn frames_tensor(images: &[&Image]) -> Result<Tensor> {
    let (h, w) = (images[0].height(), images[0].width());
    let data = images
        .iter()
        .flat_map(|img| img.data().iter().map(|&v| v as f64 / 255.0))
        .collect();
    Tensor::new(vec![images.len(), 1, h, w], data)
}

impl Batch {
    pub fn new(ids: Vec<String>, pairs: &[&GasFramePair]) -> Result<Self> {
        let stream = |k: usize| -> Result<(Tensor, Vec<u8>, Vec<bool>)> {
            let frames: Vec<&Image> = pairs.iter().map(|p| &p.frames[k]).collect();
            let masks = pairs.iter().flat_map(|p| p.masks[k].data().iter().copied()).collect();
            Ok((frames_tensor(&frames)?, masks, pairs.iter().map(|p| p.present[k]).collect()))
        };
        let (f0, m0, p0) = stream(0)?;
        let (f1, m1, p1) = stream(1)?;
        Ok(Batch {
            ids,
            frames: [f0, f1],
            masks: [m0, m1],
            present: [p0, p1],
            labels: pairs.iter().map(|p| p.label.index() as u8).collect(),
            size: pairs[0].size(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn targets(&self) -> BatchTargets<'_> {
        BatchTargets {
            masks: [&self.masks[0], &self.masks[1]],
            present: [&self.present[0], &self.present[1]],
            labels: &self.labels,
        }
    }
}

/// Per-pixel argmax of `N x C x H x W` logits as label images.
pub fn predicted_masks(logits: &Tensor) -> Result<Vec<Image>> {
    let (n, c, h, w) = logits.dims4()?;
    let plane = h * w;
    let d = logits.data();
    (0..n)
        .map(|s| {
            let base = s * c * plane;
            let labels = (0..plane)
                .map(|i| {
                    let mut best = 0;
                    for k in 1..c {
                        if d[base + k * plane + i] > d[base + best * plane + i] {
                            best = k;
                        }
                    }
                    best as u8
                })
                .collect();
            Image::new(w, h, labels)
        })
        .collect()
}

/// Class counts of segmentation labels over the present streams of `pairs`
/// for the given stream indices.
pub fn pixel_class_counts<'a>(pairs: impl Iterator<Item = &'a GasFramePair>, streams: &[usize]) -> [u64; NUM_CLASSES] {
    let mut counts = [0u64; NUM_CLASSES];
    for p in pairs {
        for &k in streams {
            if p.present[k] {
                for &l in p.masks[k].data() {
                    counts[l as usize] += 1;
                }
            }
        }
    }
    counts
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for a tuple of indices under `seed`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ p))
}
