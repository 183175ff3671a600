//! Pooled confusion counts, Hamming loss and micro-averaged P/R/F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts pooled over every (document, label) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl Confusion {
    pub fn cells(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn add(&mut self, truth: bool, pred: bool) {
        match (truth, pred) {
            (true, true) => self.true_pos += 1,
            (false, true) => self.false_pos += 1,
            (true, false) => self.false_neg += 1,
            (false, false) => self.true_neg += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }

    pub fn hamming_loss(&self) -> f64 {
        ratio(self.false_pos + self.false_neg, self.cells())
    }

    pub fn prf(&self) -> Prf {
        let precision = ratio(self.true_pos, self.true_pos + self.false_pos);
        let recall = ratio(self.true_pos, self.true_pos + self.false_neg);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1 }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pools the confusion counts of two equally shaped binary matrices.
pub fn confusion<T: AsRef<[bool]>, P: AsRef<[bool]>>(truth: &[T], pred: &[P]) -> Result<Confusion> {
    if truth.len() != pred.len() {
        return Err(Error::contract(format!("{} truth rows but {} predicted rows", truth.len(), pred.len())));
    }
    let width = truth.first().map(|r| r.as_ref().len());
    let mut c = Confusion::default();
    for (i, (t, p)) in truth.iter().zip(pred).enumerate() {
        let (t, p) = (t.as_ref(), p.as_ref());
        if Some(t.len()) != width || p.len() != t.len() {
            return Err(Error::contract(format!("row {i}: truth has {} labels, prediction {}", t.len(), p.len())));
        }
        for (&a, &b) in t.iter().zip(p) {
            c.add(a, b);
        }
    }
    Ok(c)
}

/// Fraction of mismatched cells. Empty input is an error.
pub fn hamming_loss<T: AsRef<[bool]>, P: AsRef<[bool]>>(truth: &[T], pred: &[P]) -> Result<f64> {
    let c = confusion(truth, pred)?;
    if c.cells() == 0 {
        return Err(Error::EmptyInput("no label cells to score".into()));
    }
    Ok(c.hamming_loss())
}

/// Micro precision, recall and F1; a vanishing denominator gives 0.
pub fn micro_prf<T: AsRef<[bool]>, P: AsRef<[bool]>>(truth: &[T], pred: &[P]) -> Result<Prf> {
    Ok(confusion(truth, pred)?.prf())
}
