//! Confusion-matrix based evaluation: accuracy, per-class recall and F1,
//! and support-weighted F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds every position with `mask = true`.
    pub fn accumulate(&mut self, preds: &[usize], labels: &[i64], mask: &[bool]) -> Result<()> {
        if preds.len() != labels.len() || mask.len() != labels.len() {
            return Err(Error::Shape("predictions, labels and mask disagree".into()));
        }
        let c = self.n_classes;
        for i in 0..labels.len() {
            if !mask[i] {
                continue;
            }
            let y = labels[i];
            if y < 0 || y as usize >= c {
                return Err(Error::LabelOutOfRange { label: y, classes: c });
            }
            if preds[i] >= c {
                return Err(Error::InvalidArgument(format!("prediction {} out of range", preds[i])));
            }
            self.counts[y as usize * c + preds[i]] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Shape("cannot merge matrices of different class counts".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn summarize(&self) -> Result<Summary> {
        summarize(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// Per-class accuracy, read as recall.
    pub class_recall: Vec<f64>,
    pub class_f1: Vec<f64>,
    pub support: Vec<u64>,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn summarize(cm: &ConfusionMatrix) -> Result<Summary> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyBatch);
    }
    let c = cm.n_classes;
    let mut class_recall = Vec::with_capacity(c);
    let mut class_f1 = Vec::with_capacity(c);
    let mut support = Vec::with_capacity(c);
    let mut trace = 0;
    let mut weighted = 0.0;
    for k in 0..c {
        let tp = cm.get(k, k);
        let actual: u64 = (0..c).map(|j| cm.get(k, j)).sum();
        let predicted: u64 = (0..c).map(|i| cm.get(i, k)).sum();
        let recall = ratio(tp, actual);
        let precision = ratio(tp, predicted);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        trace += tp;
        weighted += actual as f64 * f1;
        class_recall.push(recall);
        class_f1.push(f1);
        support.push(actual);
    }
    Ok(Summary {
        accuracy: ratio(trace, total),
        weighted_f1: weighted / total as f64,
        class_recall,
        class_f1,
        support,
    })
}

impl Summary {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = format!("acc={}\nwf1={}\n", self.accuracy, self.weighted_f1);
        for k in 0..self.class_f1.len() {
            out.push_str(&format!(
                "class{k}.acc={}\nclass{k}.f1={}\nclass{k}.support={}\n",
                self.class_recall[k], self.class_f1[k], self.support[k]
            ));
        }
        out
    }

    pub fn csv_header(n_classes: usize) -> String {
        let mut cols = vec!["acc".to_string(), "wf1".to_string()];
        for k in 0..n_classes {
            cols.push(format!("class{k}_acc"));
            cols.push(format!("class{k}_f1"));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.accuracy.to_string(), self.weighted_f1.to_string()];
        for k in 0..self.class_f1.len() {
            cols.push(self.class_recall[k].to_string());
            cols.push(self.class_f1[k].to_string());
        }
        cols.join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_examples() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&[0, 1, 2], &[0, 1, 2], &[true; 3]).unwrap();
        assert_eq!(cm.counts, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&[1, 0], &[0, 1], &[false, false]).unwrap();
        assert_eq!(cm.total(), 0);
        cm.accumulate(&[0, 1, 1], &[0, 0, 1], &[true; 3]).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(0, 1), cm.get(1, 1), cm.get(1, 0)), (1, 1, 1, 0));
        assert!(cm.accumulate(&[0], &[2], &[true]).is_err());
        assert!(cm.accumulate(&[0], &[-1], &[false]).is_ok());
    }

    #[test]
    fn hand_worked_three_samples() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&[0, 1, 1], &[0, 0, 1], &[true; 3]).unwrap();
        let s = cm.summarize().unwrap();
        let two_thirds = 2.0 / 3.0;
        assert_eq!(s.accuracy, two_thirds);
        assert!((s.class_f1[0] - two_thirds).abs() < 1e-15);
        assert!((s.class_f1[1] - two_thirds).abs() < 1e-15);
        assert!((s.weighted_f1 - two_thirds).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&[0, 1, 0], &[0, 1, 0], &[true; 3]).unwrap();
        let s = cm.summarize().unwrap();
        assert_eq!((s.accuracy, s.weighted_f1), (1.0, 1.0));
        assert_eq!(s.class_f1, vec![1.0, 1.0, 0.0]);
        assert_eq!(s.support[2], 0);
        assert!(ConfusionMatrix::new(2).summarize().is_err());
    }

    #[test]
    fn merge_equals_joint_accumulation() {
        let mut a = ConfusionMatrix::new(2);
        let mut b = ConfusionMatrix::new(2);
        let mut joint = ConfusionMatrix::new(2);
        a.accumulate(&[0, 1], &[1, 1], &[true, true]).unwrap();
        b.accumulate(&[0], &[0], &[true]).unwrap();
        joint.accumulate(&[0, 1, 0], &[1, 1, 0], &[true; 3]).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a, joint);
    }

    #[test]
    fn key_value_block() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&[0, 1], &[0, 1], &[true, true]).unwrap();
        let s = cm.summarize().unwrap();
        let text = s.to_key_values();
        assert!(text.starts_with("acc=1\nwf1=1\n"));
        assert_eq!(Summary::csv_header(2).split(',').count(), s.csv_row().split(',').count());
    }
}
