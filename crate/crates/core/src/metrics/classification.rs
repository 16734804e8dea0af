use crate::net::NUM_CLASSES;

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

/// Ratios in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub f1: [f64; NUM_CLASSES],
    pub macro_f1: f64,
    pub balanced_accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn add(&mut self, truth: usize, prediction: usize) {
        self.counts[truth][prediction] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn metrics(&self) -> ClassificationMetrics {
        classification_metrics(self)
    }
}

/// Accuracy, per-class precision/recall/F1 (0/0 taken as 0), macro F1 and
/// balanced accuracy (mean recall).
pub fn classification_metrics(cm: &ConfusionMatrix) -> ClassificationMetrics {
    let c = &cm.counts;
    let diag: u64 = (0..NUM_CLASSES).map(|k| c[k][k]).sum();
    let precision = std::array::from_fn(|k| ratio(c[k][k], (0..NUM_CLASSES).map(|t| c[t][k]).sum()));
    let recall: [f64; NUM_CLASSES] = std::array::from_fn(|k| ratio(c[k][k], c[k].iter().sum()));
    let f1 = std::array::from_fn(|k| {
        let (p, r): (f64, f64) = (precision[k], recall[k]);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    });
    ClassificationMetrics {
        accuracy: ratio(diag, cm.total()),
        precision,
        recall,
        f1,
        macro_f1: f1.iter().sum::<f64>() / NUM_CLASSES as f64,
        balanced_accuracy: recall.iter().sum::<f64>() / NUM_CLASSES as f64,
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_perfect() {
        let m = ConfusionMatrix::from_counts([[3, 0, 0], [0, 2, 0], [0, 0, 5]]).metrics();
        assert_eq!((m.accuracy, m.macro_f1, m.balanced_accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn never_predicted_class_has_zero_f1() {
        let m = ConfusionMatrix::from_counts([[3, 0, 0], [0, 0, 2], [0, 0, 5]]).metrics();
        assert_eq!(m.f1[1], 0.0);
        assert_eq!(m.f1[0], 1.0);
    }

    #[test]
    fn ties_pick_first() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }
}
