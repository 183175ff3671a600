//! Conditional label co-occurrence and its symmetric degree normalization.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::Result;

/// Lower bound on a label's degree, so labels unseen in training keep a
/// finite normalized row.
pub const DEGREE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    /// `raw[[i, j]] = P(label i | label j)` estimated from counts.
    pub raw: Array2<f64>,
    pub normalized: Array2<f64>,
    /// Row sums of `raw`, floored at [`DEGREE_FLOOR`].
    pub degree: Array1<f64>,
}

impl CooccurrenceMatrix {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::from_raw(compute_cooccurrence(corpus))
    }

    pub fn from_raw(raw: Array2<f64>) -> Self {
        let degree = degrees(raw.view());
        let normalized = normalize_cooccurrence(raw.view());
        Self { raw, normalized, degree }
    }

    pub fn num_labels(&self) -> usize {
        self.raw.nrows()
    }
}

/// `M[i][j] = count(i ∧ j) / count(j)`, zero for labels that never occur.
pub fn compute_cooccurrence(corpus: &Corpus) -> Array2<f64> {
    let l = corpus.num_labels();
    let mut joint = Array2::<f64>::zeros((l, l));
    for doc in &corpus.documents {
        let present: Vec<usize> =
            doc.labels.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        for &i in &present {
            for &j in &present {
                joint[[i, j]] += 1.0;
            }
        }
    }
    let mut m = Array2::<f64>::zeros((l, l));
    for j in 0..l {
        let count_j = joint[[j, j]];
        if count_j > 0.0 {
            for i in 0..l {
                m[[i, j]] = joint[[i, j]] / count_j;
            }
        }
    }
    m
}

fn degrees(raw: ArrayView2<'_, f64>) -> Array1<f64> {
    raw.rows().into_iter().map(|r| r.sum().max(DEGREE_FLOOR)).collect()
}

/// `D^{-1/2} · M · D^{-1/2}` with `D` the diagonal of floored row sums.
pub fn normalize_cooccurrence(raw: ArrayView2<'_, f64>) -> Array2<f64> {
    let d = degrees(raw);
    let inv_sqrt = d.mapv(|x| 1.0 / x.sqrt());
    let mut out = raw.to_owned();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    out
}

/// Writes [`matrix_csv`] to `path`.
pub fn write_matrix_csv(names: &[String], m: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    std::fs::write(path, matrix_csv(names, m))?;
    Ok(())
}

/// An L×L matrix as CSV with label names as header row and first column.
pub fn matrix_csv(names: &[String], m: ArrayView2<'_, f64>) -> String {
    let mut out = String::from("label");
    for n in names {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for (i, row) in m.rows().into_iter().enumerate() {
        out.push_str(&names[i]);
        for v in row {
            // Display for f64 is the shortest representation that round-trips.
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
