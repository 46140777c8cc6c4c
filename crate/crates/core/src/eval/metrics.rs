//! Classification and regression metrics.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, actual: b });
    }
    if a == 0 {
        return Err(Error::InsufficientData("metrics need at least one sample".into()));
    }
    Ok(())
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Accuracy of always predicting the most frequent class.
pub fn majority_baseline(y_true: &[usize]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::InsufficientData("majority baseline of no labels".into()));
    }
    let max_class = *y_true.iter().max().expect("non-empty");
    let mut counts = vec![0usize; max_class + 1];
    for &c in y_true {
        counts[c] += 1;
    }
    Ok(*counts.iter().max().expect("non-empty") as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn of(y_true: &[usize], y_pred: &[usize], positive: usize) -> Confusion {
        let mut c = Confusion { tp: 0, fp: 0, fn_: 0 };
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == positive, p == positive) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                _ => {}
            }
        }
        c
    }

    /// `2TP / (2TP + FP + FN)`; zero when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

pub fn f1_binary(y_true: &[usize], y_pred: &[usize], positive: usize) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    Ok(Confusion::of(y_true, y_pred, positive).f1())
}

/// Unweighted mean of per-class F1 over the classes seen in either vector.
pub fn f1_macro(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    let classes: BTreeSet<usize> = y_true.iter().chain(y_pred).copied().collect();
    let sum: f64 = classes.iter().map(|&c| Confusion::of(y_true, y_pred, c).f1()).sum();
    Ok(sum / classes.len() as f64)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_pred.len())?;
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

/// Pearson correlation; `None` when either vector is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    check_lengths(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::InsufficientData("pearson needs at least 2 samples".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let y = [0, 1, 1, 0, 1];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(f1_binary(&y, &y, 1).unwrap(), 1.0);
        let r = [0.0, 1.5, 3.0];
        assert_eq!(mae(&r, &r).unwrap(), 0.0);
        assert!((pearson(&r, &r).unwrap().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_f1() {
        // TP=4 FP=1 FN=2 TN=3
        let t = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
        let p = [1, 1, 1, 1, 0, 0, 1, 0, 0, 0];
        let c = Confusion::of(&t, &p, 1);
        assert_eq!(c, Confusion { tp: 4, fp: 1, fn_: 2 });
        assert!((c.precision() - 0.8).abs() < 1e-12);
        assert!((c.recall() - 4.0 / 6.0).abs() < 1e-12);
        assert!((f1_binary(&t, &p, 1).unwrap() - 8.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn f1_without_positives_is_zero() {
        assert_eq!(f1_binary(&[0, 0, 1], &[0, 0, 0], 1).unwrap(), 0.0);
    }

    #[test]
    fn macro_f1_averages_classes() {
        let t = [0, 1, 2, 3];
        let p = [0, 1, 2, 2];
        // class 2: tp 1, fp 1 -> 2/3; class 3: 0
        let expected = (1.0 + 1.0 + 2.0 / 3.0 + 0.0) / 4.0;
        assert!((f1_macro(&t, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn majority_on_88_67() {
        let mut y = vec![1usize; 88];
        y.extend(vec![0usize; 67]);
        assert_eq!(majority_baseline(&y).unwrap(), 88.0 / 155.0);
        let pred = vec![1usize; 155];
        assert_eq!(accuracy(&y, &pred).unwrap(), 88.0 / 155.0);
    }

    #[test]
    fn pearson_cases() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap().unwrap();
        assert!((r - 0.6).abs() < 1e-12);
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }
}
