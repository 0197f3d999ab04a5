//! Confusion-matrix accumulation and the metrics derived from it.
//!
//! Cell `(i, j)` counts pixels of true class `i` predicted as class `j`.
//! With two classes and class 0 as the positive class, the four cells sit
//! where the usual table puts them: `(0,0)` TP, `(0,1)` FN, `(1,0)` FP,
//! `(1,1)` TN.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

/// How per-class values are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Average {
    /// Unweighted mean over classes where the value is defined.
    #[default]
    Macro,
    /// Pool the TP/FP/FN counts of all classes first.
    Micro,
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64, what: &str) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric(format!("{what}: zero denominator")))
    } else {
        Ok(num as f64 / den as f64)
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::param("confusion matrix needs at least one class"));
        }
        Ok(Self {
            classes,
            counts: vec![0; classes * classes],
        })
    }

    /// Row-major counts, `counts[i * classes + j]`.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if classes == 0 || counts.len() != classes * classes {
            return Err(Error::param(format!(
                "{} counts do not form a {classes}x{classes} matrix",
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    /// Two-class matrix with class 0 as the positive class.
    pub fn binary(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self {
            classes: 2,
            counts: vec![tp, fn_, fp, tn],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Tallies every pixel whose `ignore` flag is unset.
    pub fn update(&mut self, pred: &[usize], truth: &[usize], ignore: Option<&[bool]>) -> Result<()> {
        if pred.len() != truth.len() || ignore.is_some_and(|m| m.len() != pred.len()) {
            return Err(Error::shape(format!(
                "prediction ({}), truth ({}) and ignore masks differ in size",
                pred.len(),
                truth.len()
            )));
        }
        let c = self.classes;
        // validate first so a bad pixel leaves the matrix untouched
        for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
            if ignore.is_some_and(|m| m[i]) {
                continue;
            }
            if p >= c || t >= c {
                return Err(Error::data(format!(
                    "class id {} at pixel {i} outside 0..{c}",
                    p.max(t)
                )));
            }
        }
        for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
            if !ignore.is_some_and(|m| m[i]) {
                self.counts[t * c + p] += 1;
            }
        }
        Ok(())
    }

    /// Argmax of `probs` against argmax of one-hot `target`, both `[C,H,W]`
    /// or `[N,C,H,W]`; `ignore` has one entry per pixel, nonzero to skip.
    pub fn update_from_probs(&mut self, probs: &Tensor, target: &Tensor, ignore: Option<&Tensor>) -> Result<()> {
        if probs.shape() != target.shape() {
            return Err(Error::shape("prediction and target shapes differ"));
        }
        let pred = argmax_channels(probs)?;
        let truth = argmax_channels(target)?;
        let mask: Option<Vec<bool>> = ignore.map(|m| m.data().iter().map(|&v| v != 0.0).collect());
        self.update(&pred, &truth, mask.as_deref())
    }

    /// Cell-wise sum.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::shape(format!(
                "cannot merge {}-class and {}-class matrices",
                self.classes, other.classes
            )));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn class_counts(&self, class: usize) -> ClassCounts {
        let tp = self.get(class, class);
        let row: u64 = (0..self.classes).map(|j| self.get(class, j)).sum();
        let col: u64 = (0..self.classes).map(|i| self.get(i, class)).sum();
        let (fn_, fp) = (row - tp, col - tp);
        ClassCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    fn check_class(&self, class: usize) -> Result<ClassCounts> {
        if class >= self.classes {
            return Err(Error::param(format!(
                "class {class} outside 0..{}",
                self.classes
            )));
        }
        Ok(self.class_counts(class))
    }

    pub fn accuracy(&self) -> Result<f64> {
        ratio(self.trace(), self.total(), "accuracy")
    }

    pub fn precision(&self, class: usize) -> Result<f64> {
        let k = self.check_class(class)?;
        ratio(k.tp, k.tp + k.fp, "precision")
    }

    pub fn recall(&self, class: usize) -> Result<f64> {
        let k = self.check_class(class)?;
        ratio(k.tp, k.tp + k.fn_, "recall")
    }

    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub fn f1(&self, class: usize) -> Result<f64> {
        let p = self.precision(class)?;
        let r = self.recall(class)?;
        Ok(f1_score(p, r))
    }

    pub fn dice(&self, class: usize) -> Result<f64> {
        let k = self.check_class(class)?;
        ratio(2 * k.tp, 2 * k.tp + k.fp + k.fn_, "dice")
    }

    pub fn jaccard(&self, class: usize) -> Result<f64> {
        let k = self.check_class(class)?;
        ratio(k.tp, k.tp + k.fp + k.fn_, "IoU")
    }

    /// Mean IoU over classes that occur in the truth or the prediction.
    pub fn mean_iou(&self) -> Result<f64> {
        self.macro_mean(|c| self.jaccard(c), "MIoU")
    }

    fn macro_mean(&self, f: impl Fn(usize) -> Result<f64>, what: &str) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in 0..self.classes {
            match f(c) {
                Ok(v) => {
                    sum += v;
                    n += 1;
                }
                Err(Error::UndefinedMetric(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if n == 0 {
            return Err(Error::UndefinedMetric(format!("{what}: no scored classes")));
        }
        Ok(sum / n as f64)
    }

    fn pooled(&self) -> ClassCounts {
        (0..self.classes).fold(ClassCounts { tp: 0, fp: 0, fn_: 0, tn: 0 }, |acc, c| {
            let k = self.class_counts(c);
            ClassCounts {
                tp: acc.tp + k.tp,
                fp: acc.fp + k.fp,
                fn_: acc.fn_ + k.fn_,
                tn: acc.tn + k.tn,
            }
        })
    }

    pub fn precision_avg(&self, avg: Average) -> Result<f64> {
        match avg {
            Average::Macro => self.macro_mean(|c| self.precision(c), "precision"),
            Average::Micro => {
                let k = self.pooled();
                ratio(k.tp, k.tp + k.fp, "precision")
            }
        }
    }

    pub fn recall_avg(&self, avg: Average) -> Result<f64> {
        match avg {
            Average::Macro => self.macro_mean(|c| self.recall(c), "recall"),
            Average::Micro => {
                let k = self.pooled();
                ratio(k.tp, k.tp + k.fn_, "recall")
            }
        }
    }

    pub fn f1_avg(&self, avg: Average) -> Result<f64> {
        match avg {
            Average::Macro => self.macro_mean(|c| self.f1(c), "F1"),
            Average::Micro => Ok(f1_score(self.precision_avg(avg)?, self.recall_avg(avg)?)),
        }
    }

    pub fn dice_avg(&self, avg: Average) -> Result<f64> {
        match avg {
            Average::Macro => self.macro_mean(|c| self.dice(c), "dice"),
            Average::Micro => {
                let k = self.pooled();
                ratio(2 * k.tp, 2 * k.tp + k.fp + k.fn_, "dice")
            }
        }
    }

    pub fn report(&self, avg: Average) -> Result<MetricReport> {
        Ok(MetricReport {
            accuracy: self.accuracy()?,
            precision: self.precision_avg(avg)?,
            recall: self.recall_avg(avg)?,
            miou: self.mean_iou()?,
            f1: self.f1_avg(avg)?,
            dice: self.dice_avg(avg)?,
        })
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-pixel channel argmax of a `[C,H,W]` or `[N,C,H,W]` tensor, first
/// maximum on ties.
pub fn argmax_channels(t: &Tensor) -> Result<Vec<usize>> {
    let d = t.dims4()?;
    let p = d.plane();
    let x = t.data();
    let mut out = Vec::with_capacity(d.n * p);
    for n in 0..d.n {
        let base = n * d.c * p;
        for i in 0..p {
            let mut best = 0;
            for c in 1..d.c {
                if x[base + c * p + i] > x[base + best * p + i] {
                    best = c;
                }
            }
            out.push(best);
        }
    }
    Ok(out)
}

/// Aggregate scores, serialized with the column names used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    #[serde(rename = "MIoU")]
    pub miou: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "Dice")]
    pub dice: f64,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("MIoU", self.miou),
            ("F1", self.f1),
            ("Dice", self.dice),
        ] {
            writeln!(f, "{k:<10} {v:.6}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn worked_examples() {
        // 10 000 positives and 1 000 negatives, everything predicted positive
        let cm = ConfusionMatrix::binary(10_000, 0, 1_000, 0);
        assert!((cm.accuracy().unwrap() - 0.9091).abs() < 1e-4);
        let cm = ConfusionMatrix::binary(910, 0, 90, 0);
        assert_eq!(cm.precision(0).unwrap(), 0.91);
        let cm = ConfusionMatrix::binary(940, 60, 0, 0);
        assert_eq!(cm.recall(0).unwrap(), 0.94);
    }

    #[test]
    fn small_binary_case() {
        let cm = ConfusionMatrix::binary(3, 2, 1, 4);
        assert_eq!(cm.accuracy().unwrap(), 0.7);
        assert_eq!(cm.precision(0).unwrap(), 0.75);
        assert_eq!(cm.recall(0).unwrap(), 0.6);
        assert!((cm.f1(0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((cm.dice(0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.jaccard(0).unwrap(), 0.5);
        let k = cm.class_counts(1);
        assert_eq!((k.tp, k.fp, k.fn_, k.tn), (4, 2, 1, 3));
    }

    #[test]
    fn update_matches_brute_force() {
        let mut rng = SeededRng::new(1);
        let pred: Vec<usize> = (0..100).map(|_| rng.below(3)).collect();
        let truth: Vec<usize> = (0..100).map(|_| rng.below(3)).collect();
        let mut cm = ConfusionMatrix::new(3).unwrap();
        cm.update(&pred, &truth, None).unwrap();
        assert_eq!(cm.total(), 100);
        for i in 0..3 {
            for j in 0..3 {
                let n = pred.iter().zip(&truth).filter(|&(&p, &t)| t == i && p == j).count();
                assert_eq!(cm.get(i, j), n as u64);
            }
        }
    }

    #[test]
    fn ignored_and_invalid_pixels() {
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.update(&[0, 1], &[1, 1], Some(&[true, true])).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(cm.accuracy(), Err(Error::UndefinedMetric(_))));
        assert!(matches!(cm.mean_iou(), Err(Error::UndefinedMetric(_))));
        assert!(matches!(cm.update(&[0, 5], &[0, 0], None), Err(Error::Data(_))));
        assert_eq!(cm.total(), 0);
        // an out-of-range id under the ignore mask is fine
        cm.update(&[0, 5], &[0, 0], Some(&[false, true])).unwrap();
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn perfect_and_disjoint() {
        let mut cm = ConfusionMatrix::new(3).unwrap();
        cm.update(&[0, 1, 2, 2], &[0, 1, 2, 2], None).unwrap();
        let r = cm.report(Average::Macro).unwrap();
        assert_eq!((r.accuracy, r.miou, r.f1, r.dice), (1.0, 1.0, 1.0, 1.0));
        let cm = ConfusionMatrix::binary(0, 5, 5, 0);
        assert_eq!(cm.jaccard(0).unwrap(), 0.0);
        assert_eq!(cm.f1(0).unwrap(), 0.0);
    }

    #[test]
    fn macro_skips_undefined_classes() {
        // class 2 never appears in truth or prediction
        let cm = ConfusionMatrix::from_counts(3, vec![2, 1, 0, 1, 4, 0, 0, 0, 0]).unwrap();
        let iou0 = 2.0 / 4.0;
        let iou1 = 4.0 / 6.0;
        assert!((cm.mean_iou().unwrap() - (iou0 + iou1) / 2.0).abs() < 1e-15);
        let p = (2.0 / 3.0 + 4.0 / 5.0) / 2.0;
        assert!((cm.precision_avg(Average::Macro).unwrap() - p).abs() < 1e-15);
        assert_eq!(cm.precision_avg(Average::Micro).unwrap(), 6.0 / 8.0);
    }

    #[test]
    fn report_keys() {
        let cm = ConfusionMatrix::binary(3, 2, 1, 4);
        let v = serde_json::to_value(cm.report(Average::Macro).unwrap()).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["Dice", "F1", "MIoU", "accuracy", "precision", "recall"]);
    }

    #[test]
    fn argmax_from_probs() {
        let p = Tensor::from_vec(&[2, 1, 3], vec![0.9, 0.2, 0.5, 0.1, 0.8, 0.5]).unwrap();
        assert_eq!(argmax_channels(&p).unwrap(), vec![0, 1, 0]);
    }
}
