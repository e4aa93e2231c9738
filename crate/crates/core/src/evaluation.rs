//! Agreement between a predicted clustering and reference classes:
//! normalized mutual information, classification rate, and macro F1.
//!
//! Labels may be any ordered tokens. They are densified internally in
//! ascending token order, so "lowest id" tie-breaking refers to that order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Contingency table: `counts[l][h]` points of predicted cluster `l` carry
/// reference class `h`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchingMatrix {
    counts: Vec<Vec<usize>>,
    n: usize,
}

impl MatchingMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn classes(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes()];
        for row in &self.counts {
            for (h, &c) in row.iter().enumerate() {
                sizes[h] += c;
            }
        }
        sizes
    }

    /// Plurality class of every cluster; ties go to the lowest class.
    pub fn majority_classes(&self) -> Vec<usize> {
        self.counts
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, 0), |(bh, bc), (h, &c)| if c > bc { (h, c) } else { (bh, bc) })
                    .0
            })
            .collect()
    }
}

fn densify<L: Ord>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<&L, usize> = labels.iter().map(|l| (l, 0)).collect();
    for (dense, v) in ids.values_mut().enumerate() {
        *v = dense;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

/// Counts co-occurrences of predicted clusters (rows) and true classes
/// (columns).
pub fn matching_matrix<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<MatchingMatrix> {
    if pred.len() != truth.len() {
        return Err(invalid(format!(
            "label length mismatch: predicted {}, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(invalid("label vectors are empty"));
    }
    let (p, rows) = densify(pred);
    let (t, cols) = densify(truth);
    let mut counts = vec![vec![0; cols]; rows];
    for (&l, &h) in p.iter().zip(&t) {
        counts[l][h] += 1;
    }
    Ok(MatchingMatrix {
        counts,
        n: pred.len(),
    })
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `2 I / (H(pred) + H(truth))` in `[0, 1]`. When both partitions are a
/// single block the denominator vanishes and the score is 1.
pub fn nmi_from_matrix(m: &MatchingMatrix) -> f64 {
    let n = m.n() as f64;
    let rows = m.cluster_sizes();
    let cols = m.class_sizes();
    let h = entropy(&rows, n) + entropy(&cols, n);
    if h == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for (l, row) in m.counts().iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            if count > 0 {
                let c_f = count as f64;
                mi += c_f / n * (c_f * n / (rows[l] as f64 * cols[c] as f64)).ln();
            }
        }
    }
    (2.0 * mi / h).clamp(0.0, 1.0)
}

pub fn nmi<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<f64> {
    Ok(nmi_from_matrix(&matching_matrix(pred, truth)?))
}

/// Percentage of points whose cluster's plurality class is their own class.
pub fn classification_rate<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<f64> {
    let m = matching_matrix(pred, truth)?;
    let majority = m.majority_classes();
    let correct: usize = m
        .counts()
        .iter()
        .zip(&majority)
        .map(|(row, &h)| row[h])
        .sum();
    Ok(100.0 * correct as f64 / m.n() as f64)
}

/// Unweighted mean over true classes of the per-class F1, with each cluster
/// predicting its plurality class. Classes never predicted score 0.
pub fn macro_f1<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<f64> {
    let m = matching_matrix(pred, truth)?;
    let majority = m.majority_classes();
    let classes = m.classes();
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    for (row, &h) in m.counts().iter().zip(&majority) {
        tp[h] += row[h];
        predicted[h] += row.iter().sum::<usize>();
    }
    let actual = m.class_sizes();
    let total: f64 = (0..classes)
        .map(|h| {
            if tp[h] == 0 {
                return 0.0;
            }
            let precision = tp[h] as f64 / predicted[h] as f64;
            let recall = tp[h] as f64 / actual[h] as f64;
            2.0 * precision * recall / (precision + recall)
        })
        .sum();
    Ok(total / classes as f64)
}

/// NMI and F1 as fractions, CR as a percentage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub nmi: f64,
    pub cr: f64,
    pub f1: f64,
}

impl Scores {
    pub fn compute<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<Self> {
        Ok(Self {
            nmi: nmi(pred, truth)?,
            cr: classification_rate(pred, truth)?,
            f1: macro_f1(pred, truth)?,
        })
    }

    /// All three values on a 0-100 scale.
    pub fn percent(&self) -> [f64; 3] {
        [100.0 * self.nmi, self.cr, 100.0 * self.f1]
    }
}
