use crate::image::Image;
use crate::net::NUM_CLASSES;

/// Overlap counts of one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overlap {
    pub intersection: u64,
    pub predicted: u64,
    pub truth: u64,
}

impl Overlap {
    pub fn of(pred: &[u8], gt: &[u8], class: u8) -> Self {
        assert_eq!(pred.len(), gt.len(), "mask sizes differ");
        let mut o = Overlap::default();
        for (&p, &g) in pred.iter().zip(gt) {
            let (p, g) = (p == class, g == class);
            o.intersection += (p && g) as u64;
            o.predicted += p as u64;
            o.truth += g as u64;
        }
        o
    }

    pub fn add(&mut self, other: Overlap) {
        self.intersection += other.intersection;
        self.predicted += other.predicted;
        self.truth += other.truth;
    }

    pub fn union(&self) -> u64 {
        self.predicted + self.truth - self.intersection
    }

    /// `|P n G| / |P u G|`; both empty gives 1.
    pub fn iou(&self) -> f64 {
        match self.union() {
            0 => 1.0,
            u => self.intersection as f64 / u as f64,
        }
    }

    /// `2 |P n G| / (|P| + |G|)`; both empty gives 1.
    pub fn dice(&self) -> f64 {
        match self.predicted + self.truth {
            0 => 1.0,
            s => 2.0 * self.intersection as f64 / s as f64,
        }
    }
}

pub fn iou(pred: &Image, gt: &Image, class: u8) -> f64 {
    Overlap::of(pred.data(), gt.data(), class).iou()
}

pub fn dice_coeff(pred: &Image, gt: &Image, class: u8) -> f64 {
    Overlap::of(pred.data(), gt.data(), class).dice()
}

/// Per-class overlaps pooled over many masks of one head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegionAccumulator {
    pub classes: [Overlap; NUM_CLASSES],
}

impl RegionAccumulator {
    pub fn add(&mut self, pred: &[u8], gt: &[u8]) {
        for (c, o) in self.classes.iter_mut().enumerate() {
            o.add(Overlap::of(pred, gt, c as u8));
        }
    }

    pub fn iou(&self) -> [f64; NUM_CLASSES] {
        self.classes.map(|o| o.iou())
    }

    pub fn mean_iou(&self) -> f64 {
        self.iou().iter().sum::<f64>() / NUM_CLASSES as f64
    }

    pub fn mean_dice(&self) -> f64 {
        self.classes.iter().map(|o| o.dice()).sum::<f64>() / NUM_CLASSES as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_example() {
        let p = Image::new(2, 2, vec![1, 1, 0, 0]).unwrap();
        let g = Image::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(iou(&p, &g, 1), 1.0 / 3.0);
        assert_eq!(dice_coeff(&p, &g, 1), 0.5);
        assert_eq!(iou(&p, &g, 2), 1.0);
    }
}
