//! Metrics, the co-occurrence bias diagnostic and label interventions.

mod bias;
mod metrics;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::network::{forward, Branch, Mode, PredictionBundle};
use crate::training::TrainedModel;

pub use bias::{cooccurrence_bias_report, cooccurrence_frequency, l1_distance, BiasReport, PairDiscrepancy};
pub use metrics::{confusion, hamming_loss, micro_prf, Confusion, Prf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMetrics {
    pub hamming_loss: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl From<&Confusion> for BranchMetrics {
    fn from(c: &Confusion) -> Self {
        let prf = c.prf();
        Self { hamming_loss: c.hamming_loss(), micro_precision: prf.precision, micro_recall: prf.recall, micro_f1: prf.f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub documents: usize,
    pub labels: usize,
    /// Branch behind the top-level numbers.
    pub headline: String,
    pub hamming_loss: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// Every branch in [`Branch::ALL`] order.
    pub branches: Vec<(String, BranchMetrics)>,
}

const METRIC_NAMES: [&str; 4] = ["hamming_loss", "micro_precision", "micro_recall", "micro_f1"];

fn metric_values(m: &BranchMetrics) -> [f64; 4] {
    [m.hamming_loss, m.micro_precision, m.micro_recall, m.micro_f1]
}

impl MetricReport {
    /// Builds the report from per-document bundles and truth rows.
    pub fn from_bundles(bundles: &[PredictionBundle], truth: &[Vec<bool>], headline: Branch) -> Result<Self> {
        if bundles.is_empty() {
            return Err(Error::EmptyInput("no documents to evaluate".into()));
        }
        let mut branches = Vec::with_capacity(4);
        let mut top = None;
        for b in Branch::ALL {
            let preds: Vec<Vec<bool>> = bundles.iter().map(|x| x.predict(b)).collect();
            let m = BranchMetrics::from(&confusion(truth, &preds)?);
            if b == headline {
                top = Some(m);
            }
            branches.push((b.name().to_string(), m));
        }
        let top = top.expect("headline is one of the branches");
        Ok(Self {
            documents: bundles.len(),
            labels: truth[0].len(),
            headline: headline.name().to_string(),
            hamming_loss: top.hamming_loss,
            micro_precision: top.micro_precision,
            micro_recall: top.micro_recall,
            micro_f1: top.micro_f1,
            branches,
        })
    }

    pub fn branch(&self, b: Branch) -> &BranchMetrics {
        &self.branches.iter().find(|(n, _)| n == b.name()).expect("all branches reported").1
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents: {}", self.documents);
        let _ = writeln!(out, "labels: {}", self.labels);
        let _ = writeln!(out, "headline: {}", self.headline);
        let top = BranchMetrics {
            hamming_loss: self.hamming_loss,
            micro_precision: self.micro_precision,
            micro_recall: self.micro_recall,
            micro_f1: self.micro_f1,
        };
        for (k, v) in METRIC_NAMES.iter().zip(metric_values(&top)) {
            let _ = writeln!(out, "{k}: {v}");
        }
        for (name, m) in &self.branches {
            for (k, v) in METRIC_NAMES.iter().zip(metric_values(m)) {
                let _ = writeln!(out, "{name}.{k}: {v}");
            }
        }
        out
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["documents".to_string(), "labels".into(), "headline".into()];
        cols.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        for (name, _) in &self.branches {
            cols.extend(METRIC_NAMES.iter().map(|k| format!("{name}.{k}")));
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.documents.to_string(), self.labels.to_string(), self.headline.clone()];
        cols.extend([self.hamming_loss, self.micro_precision, self.micro_recall, self.micro_f1].map(|v| v.to_string()));
        for (_, m) in &self.branches {
            cols.extend(metric_values(m).map(|v| v.to_string()));
        }
        cols.join(",")
    }
}

fn check_compatible(model: &TrainedModel, corpus: &Corpus) -> Result<()> {
    if corpus.labels.hash() != model.labels.hash() {
        return Err(Error::Integrity("corpus label space differs from the model's".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus has no documents".into()));
    }
    Ok(())
}

/// Infer-mode bundles for every document, in corpus order.
pub fn predict_corpus(model: &TrainedModel, corpus: &Corpus) -> Result<Vec<PredictionBundle>> {
    check_compatible(model, corpus)?;
    corpus
        .documents
        .iter()
        .map(|d| {
            let tokens = model.encode(&d.tokens);
            forward(&tokens, model.cooccurrence.normalized.view(), &model.params, model.config.mu, Mode::Infer, None)
        })
        .collect()
}

/// Scores every branch on `corpus`; the headline is the de-biased branch
/// unless the model was trained without de-biasing.
pub fn evaluate(model: &TrainedModel, corpus: &Corpus) -> Result<MetricReport> {
    let bundles = predict_corpus(model, corpus)?;
    MetricReport::from_bundles(&bundles, &corpus.label_matrix(), model.headline())
}

/// Infer-mode forward with the label set fed to the extractor replaced by
/// `given`; `None` keeps the model's own text prediction.
pub fn intervene<S: AsRef<str>>(model: &TrainedModel, tokens: &[S], given: Option<&[bool]>) -> Result<PredictionBundle> {
    let ids = model.encode(tokens);
    forward(&ids, model.cooccurrence.normalized.view(), &model.params, model.config.mu, Mode::Infer, given)
}
