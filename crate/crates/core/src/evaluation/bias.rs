//! Joint-prediction frequencies before and after de-biasing.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::predict_corpus;
use crate::corpus::Corpus;
use crate::error::Result;
use crate::network::Branch;
use crate::training::TrainedModel;

const TOP_PAIRS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiscrepancy {
    pub first: usize,
    pub second: usize,
    pub truth: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub label_names: Vec<String>,
    pub documents: usize,
    pub truth: Array2<f64>,
    /// Fused predictions, before de-biasing.
    pub before: Array2<f64>,
    /// De-biased predictions.
    pub after: Array2<f64>,
    pub d_before: f64,
    pub d_after: f64,
    /// Off-diagonal pairs with the largest `|before - truth|`.
    pub top_pairs: Vec<PairDiscrepancy>,
}

/// `F[i][j]` = fraction of rows where labels `i` and `j` are both set; the
/// diagonal holds each label's frequency.
pub fn cooccurrence_frequency<R: AsRef<[bool]>>(rows: &[R], labels: usize) -> Array2<f64> {
    let mut f = Array2::<f64>::zeros((labels, labels));
    for row in rows {
        let on: Vec<usize> = row.as_ref().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        for &i in &on {
            for &j in &on {
                f[[i, j]] += 1.0;
            }
        }
    }
    if !rows.is_empty() {
        f /= rows.len() as f64;
    }
    f
}

/// Entrywise L1 distance.
pub fn l1_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "matrices differ in shape");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

pub fn cooccurrence_bias_report(model: &TrainedModel, corpus: &Corpus) -> Result<BiasReport> {
    let bundles = predict_corpus(model, corpus)?;
    let l = corpus.num_labels();
    let truth = cooccurrence_frequency(&corpus.label_matrix(), l);
    let before_rows: Vec<Vec<bool>> = bundles.iter().map(|b| b.predict(Branch::Fused)).collect();
    let after_rows: Vec<Vec<bool>> = bundles.iter().map(|b| b.predict(Branch::Debiased)).collect();
    let before = cooccurrence_frequency(&before_rows, l);
    let after = cooccurrence_frequency(&after_rows, l);
    Ok(BiasReport::new(corpus.labels.names().to_vec(), corpus.len(), truth, before, after))
}

impl BiasReport {
    pub fn new(label_names: Vec<String>, documents: usize, truth: Array2<f64>, before: Array2<f64>, after: Array2<f64>) -> Self {
        let l = truth.nrows();
        let mut pairs: Vec<PairDiscrepancy> = (0..l)
            .flat_map(|i| (i + 1..l).map(move |j| (i, j)))
            .map(|(i, j)| PairDiscrepancy {
                first: i,
                second: j,
                truth: truth[[i, j]],
                before: before[[i, j]],
                after: after[[i, j]],
            })
            .collect();
        pairs.sort_by(|a, b| (b.before - b.truth).abs().total_cmp(&(a.before - a.truth).abs()));
        pairs.truncate(TOP_PAIRS);
        Self {
            label_names,
            documents,
            d_before: l1_distance(before.view(), truth.view()),
            d_after: l1_distance(after.view(), truth.view()),
            truth,
            before,
            after,
            top_pairs: pairs,
        }
    }

    /// `stage,l1_distance` with one row each for before and after.
    pub fn distances_csv(&self) -> String {
        format!("stage,l1_distance\nbefore,{}\nafter,{}\n", self.d_before, self.d_after)
    }
}
