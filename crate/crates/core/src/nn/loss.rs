//! Masked losses. Unlabeled nodes contribute neither loss nor gradient.

use super::{Matrix, N_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One continuous target per node.
    Continuous(Vec<f64>),
    /// Class index in `0..4` per node.
    Classes(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Continuous(v) => v.len(),
            Targets::Classes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub targets: Targets,
    pub mask: Vec<bool>,
}

impl LabelSet {
    pub fn new(targets: Targets, mask: Vec<bool>) -> Result<Self> {
        if targets.len() != mask.len() {
            return Err(Error::Argument(format!(
                "{} targets but mask of length {}",
                targets.len(),
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Argument("label mask selects no nodes".into()));
        }
        let bad = match &targets {
            Targets::Continuous(y) => mask.iter().zip(y).position(|(&m, v)| m && !v.is_finite()),
            Targets::Classes(y) => mask.iter().zip(y).position(|(&m, &c)| m && c >= N_CLASSES),
        };
        if let Some(i) = bad {
            return Err(Error::Argument(format!(
                "labeled node {i} has an invalid target"
            )));
        }
        Ok(Self { targets, mask })
    }

    pub fn labeled(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same targets under a different mask.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        Self::new(self.targets.clone(), mask)
    }
}

fn check_mask(pred: &Matrix, mask: &[bool]) -> Result<usize> {
    if pred.rows() != mask.len() {
        return Err(Error::Argument(format!(
            "{} predictions but mask of length {}",
            pred.rows(),
            mask.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::Argument("empty label mask".into()));
    }
    Ok(n)
}

/// Mean squared error over masked rows of a single-column prediction.
///
/// Returns `(mse, rmse, d mse / d pred)`.
pub fn masked_mse(pred: &Matrix, y: &[f64], mask: &[bool]) -> Result<(f64, f64, Matrix)> {
    let n = check_mask(pred, mask)?;
    if pred.cols() != 1 || y.len() != mask.len() {
        return Err(Error::Argument(
            "masked_mse expects one output column and one target per node".into(),
        ));
    }
    let mut grad = Matrix::zeros(pred.rows(), 1);
    let mut sum = 0.0;
    for i in 0..pred.rows() {
        if mask[i] {
            let d = pred.get(i, 0) - y[i];
            sum += d * d;
            grad.set(i, 0, 2.0 * d / n as f64);
        }
    }
    let mse = sum / n as f64;
    Ok((mse, mse.sqrt(), grad))
}

/// Mean of `-log softmax(logits)[y]` over masked rows, via log-sum-exp.
///
/// Returns `(loss, d loss / d logits)`.
pub fn masked_cross_entropy(logits: &Matrix, y: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    let n = check_mask(logits, mask)?;
    if logits.cols() != N_CLASSES || y.len() != mask.len() {
        return Err(Error::Argument(format!(
            "masked_cross_entropy expects {N_CLASSES} logits per node"
        )));
    }
    let mut grad = Matrix::zeros(logits.rows(), N_CLASSES);
    let mut total = 0.0;
    for i in 0..logits.rows() {
        if !mask[i] {
            continue;
        }
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        total += lse - row[y[i]];
        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            let p = (row[k] - lse).exp();
            *gk = (p - if k == y[i] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}
