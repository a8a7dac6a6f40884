//! Confusion-matrix evaluation: MCC, accuracy, and the undetected rate.
//!
//! Counts are indexed (reference class, assigned class). For binary
//! intrusion-detection data the positive class defaults to 1 (attack), so
//! `tn()` counts normal data labeled normal and `fn_()` counts attacks
//! labeled normal.

use crate::data::ClassId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("reference ({reference}) and assigned ({assigned}) label counts differ")]
    LengthMismatch { reference: usize, assigned: usize },
    #[error("undetected rate is undefined: no positive-class samples")]
    NoPositives,
}

/// C x C contingency counts; entry (a, b) counts samples of reference
/// class `a` that were assigned class `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    classes: usize,
    positive: ClassId,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        assert!(classes >= 2, "need at least two classes");
        ConfusionMatrix {
            counts: vec![0; classes * classes],
            classes,
            positive: 1,
        }
    }

    /// Builds counts from aligned label vectors.
    pub fn from_labels(
        reference: &[ClassId],
        assigned: &[ClassId],
        classes: usize,
    ) -> Result<Self, MetricsError> {
        if reference.len() != assigned.len() {
            return Err(MetricsError::LengthMismatch {
                reference: reference.len(),
                assigned: assigned.len(),
            });
        }
        let mut cm = ConfusionMatrix::zeros(classes);
        for (&r, &a) in reference.iter().zip(assigned) {
            if r >= classes {
                return Err(MetricsError::LabelOutOfRange { label: r, classes });
            }
            if a >= classes {
                return Err(MetricsError::LabelOutOfRange { label: a, classes });
            }
            cm.counts[r * classes + a] += 1;
        }
        Ok(cm)
    }

    /// Binary matrix from named counts (reference rows: negative, positive).
    pub fn from_binary_counts(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        let mut cm = ConfusionMatrix::zeros(2);
        cm.counts = vec![tn, fp, fn_, tp];
        cm
    }

    /// Chooses which class counts as "positive" for tn/fp/fn/tp and the
    /// undetected rate. Defaults to class 1.
    pub fn with_positive_class(mut self, positive: ClassId) -> Self {
        assert!(positive < self.classes);
        self.positive = positive;
        self
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn positive_class(&self) -> ClassId {
        self.positive
    }

    pub fn get(&self, reference: ClassId, assigned: ClassId) -> u64 {
        self.counts[reference * self.classes + assigned]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Samples of the positive class assigned to the positive class.
    pub fn tp(&self) -> u64 {
        self.get(self.positive, self.positive)
    }

    /// Positive-class samples assigned elsewhere.
    pub fn fn_(&self) -> u64 {
        (0..self.classes)
            .filter(|&c| c != self.positive)
            .map(|c| self.get(self.positive, c))
            .sum()
    }

    /// Non-positive samples assigned to the positive class.
    pub fn fp(&self) -> u64 {
        (0..self.classes)
            .filter(|&c| c != self.positive)
            .map(|c| self.get(c, self.positive))
            .sum()
    }

    /// Non-positive samples assigned to any non-positive class.
    pub fn tn(&self) -> u64 {
        self.total() - self.tp() - self.fn_() - self.fp()
    }

    /// Matthews correlation coefficient in [-1, 1].
    ///
    /// Binary matrices use (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN));
    /// larger matrices use the multiclass generalization from the full
    /// counts. Any zero denominator factor yields 0.
    pub fn mcc(&self) -> f64 {
        assert!(self.total() > 0, "mcc of an empty matrix");
        if self.classes == 2 {
            let (tp, tn, fp, fn_) = (
                self.tp() as f64,
                self.tn() as f64,
                self.fp() as f64,
                self.fn_() as f64,
            );
            let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
            if factors.contains(&0.0) {
                return 0.0;
            }
            let denom = factors.iter().product::<f64>().sqrt();
            (tp * tn - fp * fn_) / denom
        } else {
            let n = self.total() as f64;
            let trace = self.trace() as f64;
            let mut ref_sums = vec![0.0; self.classes];
            let mut asg_sums = vec![0.0; self.classes];
            #[allow(clippy::needless_range_loop)]
            for r in 0..self.classes {
                for a in 0..self.classes {
                    let count = self.get(r, a) as f64;
                    ref_sums[r] += count;
                    asg_sums[a] += count;
                }
            }
            let dot: f64 = ref_sums.iter().zip(&asg_sums).map(|(r, a)| r * a).sum();
            let ref_sq: f64 = ref_sums.iter().map(|r| r * r).sum();
            let asg_sq: f64 = asg_sums.iter().map(|a| a * a).sum();
            let denom = ((n * n - ref_sq) * (n * n - asg_sq)).sqrt();
            if denom == 0.0 {
                return 0.0;
            }
            (n * trace - dot) / denom
        }
    }

    /// Fraction of samples on the diagonal.
    pub fn accuracy(&self) -> f64 {
        assert!(self.total() > 0, "accuracy of an empty matrix");
        self.trace() as f64 / self.total() as f64
    }

    /// FN / (FN + TP): the share of positive-class (attack) samples the
    /// model let through.
    pub fn undetected_rate(&self) -> Result<f64, MetricsError> {
        let (fn_, tp) = (self.fn_(), self.tp());
        if fn_ + tp == 0 {
            return Err(MetricsError::NoPositives);
        }
        Ok(fn_ as f64 / (fn_ + tp) as f64)
    }
}
