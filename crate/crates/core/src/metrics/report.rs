use std::fmt::Write as _;

use super::boundary::{asd, hd95};
use super::classification::{argmax, ConfusionMatrix};
use super::region::RegionAccumulator;
use crate::image::Image;
use crate::net::{Modality, NUM_CLASSES};

/// Gas label in segmentation masks.
pub const GAS: u8 = 2;

/// Results of one evaluation run. Percentages for classification and region
/// metrics, pixels for boundary metrics. `None` marks a metric the run does
/// not produce.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub samples: usize,
    pub accuracy: Option<f64>,
    pub f1: Option<[f64; NUM_CLASSES]>,
    pub macro_f1: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    /// Per-head, per-class IoU, indexed by [`Modality::index`].
    pub iou: [Option<[f64; NUM_CLASSES]>; 2],
    /// Mean over present heads of the 3-class mean IoU.
    pub miou: Option<f64>,
    pub dice: Option<f64>,
    pub hd95_gas: Option<f64>,
    pub asd_gas: Option<f64>,
    /// Boundary metrics averaged over all three classes.
    pub hd95_classes: Option<f64>,
    pub asd_classes: Option<f64>,
    /// Gas-class (sample, head) pairs with an empty region on either side.
    pub boundary_excluded: u64,
    pub params_m: Option<f64>,
    pub macs_g: Option<f64>,
    pub latency_ms: Option<f64>,
    pub fps: Option<f64>,
}

const KEYS: [&str; 24] = [
    "samples",
    "accuracy",
    "f1_healthy",
    "f1_transitional",
    "f1_acidotic",
    "macro_f1",
    "balanced_accuracy",
    "iou_co2_background",
    "iou_co2_tube",
    "iou_co2_gas",
    "iou_ch4_background",
    "iou_ch4_tube",
    "iou_ch4_gas",
    "miou",
    "dice",
    "hd95_gas",
    "asd_gas",
    "hd95_classes",
    "asd_classes",
    "boundary_excluded",
    "params_m",
    "macs_g",
    "latency_ms",
    "fps",
];

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MetricsReport {
    /// Column names of [`MetricsReport::csv_row`].
    pub fn csv_header() -> String {
        KEYS.join(",")
    }

    fn values(&self) -> Vec<String> {
        let mut v = vec![self.samples.to_string(), fmt(self.accuracy)];
        for k in 0..NUM_CLASSES {
            v.push(fmt(self.f1.map(|f| f[k])));
        }
        v.push(fmt(self.macro_f1));
        v.push(fmt(self.balanced_accuracy));
        for head in &self.iou {
            for k in 0..NUM_CLASSES {
                v.push(fmt(head.map(|i| i[k])));
            }
        }
        v.extend([
            fmt(self.miou),
            fmt(self.dice),
            fmt(self.hd95_gas),
            fmt(self.asd_gas),
            fmt(self.hd95_classes),
            fmt(self.asd_classes),
            self.boundary_excluded.to_string(),
            fmt(self.params_m),
            fmt(self.macs_g),
            fmt(self.latency_ms),
            fmt(self.fps),
        ]);
        v
    }

    pub fn csv_row(&self) -> String {
        self.values().join(",")
    }

    /// One `key=value` line per metric, fixed order; absent metrics print
    /// `na`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(self.values()) {
            let v = if v.is_empty() { "na".to_string() } else { v };
            writeln!(out, "{k}={v}").expect("writing to a string");
        }
        out
    }

    pub fn gas_iou(&self, m: Modality) -> Option<f64> {
        self.iou[m.index()].map(|i| i[GAS as usize])
    }
}

/// Streams evaluation results into a [`MetricsReport`].
#[derive(Debug, Clone, Default)]
pub struct EvalAccumulator {
    samples: usize,
    confusion: ConfusionMatrix,
    classified: bool,
    regions: [Option<RegionAccumulator>; 2],
    hd_gas: Vec<f64>,
    asd_gas: Vec<f64>,
    hd_all: Vec<f64>,
    asd_all: Vec<f64>,
    excluded: u64,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one class prediction. Without logits every class scores the
    /// same, which resolves to the first class.
    pub fn add_classification(&mut self, truth: usize, logits: Option<&[f64]>) {
        let uniform = [0.0; NUM_CLASSES];
        if logits.is_some() {
            self.classified = true;
        }
        self.confusion.add(truth, argmax(logits.unwrap_or(&uniform)));
    }

    /// Record one head's predicted and reference label masks.
    pub fn add_segmentation(&mut self, m: Modality, pred: &Image, gt: &Image) {
        self.regions[m.index()]
            .get_or_insert_with(RegionAccumulator::default)
            .add(pred.data(), gt.data());
        for class in 0..NUM_CLASSES as u8 {
            let (h, a) = (hd95(pred, gt, class), asd(pred, gt, class));
            if let (Some(h), Some(a)) = (h, a) {
                self.hd_all.push(h);
                self.asd_all.push(a);
                if class == GAS {
                    self.hd_gas.push(h);
                    self.asd_gas.push(a);
                }
            } else if class == GAS {
                self.excluded += 1;
            }
        }
    }

    pub fn finish_sample(&mut self) {
        self.samples += 1;
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.confusion
    }

    pub fn report(&self) -> MetricsReport {
        let cls = (self.confusion.total() > 0).then(|| self.confusion.metrics());
        let pct = |v: f64| 100.0 * v;
        let heads: Vec<&RegionAccumulator> = self.regions.iter().flatten().collect();
        let iou = self.regions.map(|r| r.map(|r| r.iou().map(pct)));
        MetricsReport {
            samples: self.samples,
            accuracy: cls.map(|c| pct(c.accuracy)),
            f1: cls.filter(|_| self.classified).map(|c| c.f1.map(pct)),
            macro_f1: cls.filter(|_| self.classified).map(|c| pct(c.macro_f1)),
            balanced_accuracy: cls.map(|c| pct(c.balanced_accuracy)),
            iou,
            miou: (!heads.is_empty()).then(|| pct(heads.iter().map(|r| r.mean_iou()).sum::<f64>() / heads.len() as f64)),
            dice: (!heads.is_empty()).then(|| pct(heads.iter().map(|r| r.mean_dice()).sum::<f64>() / heads.len() as f64)),
            hd95_gas: mean(&self.hd_gas),
            asd_gas: mean(&self.asd_gas),
            hd95_classes: mean(&self.hd_all),
            asd_classes: mean(&self.asd_all),
            boundary_excluded: self.excluded,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_matches_header_width() {
        let r = MetricsReport {
            accuracy: Some(50.0),
            ..Default::default()
        };
        assert_eq!(r.csv_row().split(',').count(), MetricsReport::csv_header().split(',').count());
        assert!(r.to_text().contains("accuracy=50.000000\n"));
        assert!(r.to_text().contains("miou=na\n"));
    }
}
