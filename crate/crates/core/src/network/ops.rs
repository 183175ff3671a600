//! Forward operations of the classifier, each usable on its own.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::encoder::{affine, encode_traced, mean_rows, sigmoid};
use super::params::NetworkParameters;
use crate::error::Result;

pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

/// `H`: one row per token, forward state then backward state.
pub fn encode_text(tokens: &[usize], params: &NetworkParameters) -> Result<Array2<f64>> {
    encode_traced(tokens, params).map(|(h, _)| h)
}

/// `W_T · mean(H) + b_T`.
pub fn score_text(h: ArrayView2<'_, f64>, params: &NetworkParameters) -> Array1<f64> {
    affine(&params.head_t_w, mean_rows(h).view(), &params.head_t_b)
}

/// `logistic(score) ≥ mu`, boundary inclusive.
pub fn threshold_predict(scores: ArrayView1<'_, f64>, mu: f64) -> Vec<bool> {
    scores.iter().map(|&s| logistic(s) >= mu).collect()
}

/// Thresholds values that are already probabilities.
pub fn threshold_probs(probs: ArrayView1<'_, f64>, mu: f64) -> Vec<bool> {
    probs.iter().map(|&p| p >= mu).collect()
}

/// Row `i` is `E_in[i]` when label `i` is selected, else `E_out[i]`.
pub fn embed_labels(selected: &[bool], params: &NetworkParameters) -> Array2<f64> {
    let mut out = params.label_out.clone();
    for (i, &on) in selected.iter().enumerate() {
        if on {
            out.row_mut(i).assign(&params.label_in.row(i));
        }
    }
    out
}

/// `ReLU(M̂ · LI · W)`.
pub fn gcn_layer(li: ArrayView2<'_, f64>, normalized: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    normalized.dot(&li).dot(&w).mapv(|v| v.max(0.0))
}

/// Intermediate values of the label-information extractor.
#[derive(Debug, Clone)]
pub(crate) struct GraphTrace {
    /// `LI_0 … LI_n`
    pub layers: Vec<Array2<f64>>,
    /// `M̂ · LI_k` for each layer input.
    pub propagated: Vec<Array2<f64>>,
}

pub(crate) fn graph_traced(
    selected: &[bool],
    normalized: ArrayView2<'_, f64>,
    params: &NetworkParameters,
) -> (Array1<f64>, GraphTrace) {
    let mut layers = vec![embed_labels(selected, params)];
    let mut propagated = Vec::with_capacity(params.gcn.len());
    for w in &params.gcn {
        let ml = normalized.dot(layers.last().expect("non-empty"));
        let next = ml.dot(w).mapv(|v| v.max(0.0));
        propagated.push(ml);
        layers.push(next);
    }
    let li = mean_rows(layers.last().expect("non-empty").view());
    (li, GraphTrace { layers, propagated })
}

/// Embeds the selected labels, propagates them through the graph layers and
/// mean-pools over labels.
pub fn extract_li(selected: &[bool], normalized: ArrayView2<'_, f64>, params: &NetworkParameters) -> Array1<f64> {
    graph_traced(selected, normalized, params).0
}

pub(crate) fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

/// Attention weights over positions: `softmax(H · (W_a · LI))`.
pub fn attention_weights(h: ArrayView2<'_, f64>, li: ArrayView1<'_, f64>, params: &NetworkParameters) -> Array1<f64> {
    let query = params.attn_w.dot(&li);
    softmax(h.dot(&query).view())
}

/// Label-guided text summary `Σ_k A_k · H_k`.
pub fn li_attention(h: ArrayView2<'_, f64>, li: ArrayView1<'_, f64>, params: &NetworkParameters) -> Array1<f64> {
    let a = attention_weights(h, li, params);
    h.t().dot(&a)
}

/// `W_{T+LI} · (h ⊕ LI) + b_{T+LI}`; serves both the factual text summary
/// and the proxy vector.
pub fn fuse_score(h: ArrayView1<'_, f64>, li: ArrayView1<'_, f64>, params: &NetworkParameters) -> Array1<f64> {
    let x = concatenate(Axis(0), &[h, li]).expect("1-d concatenation");
    affine(&params.head_f_w, x.view(), &params.head_f_b)
}

/// Factual minus counterfactual score.
pub fn debias(factual: ArrayView1<'_, f64>, counterfactual: ArrayView1<'_, f64>) -> Array1<f64> {
    assert_eq!(factual.len(), counterfactual.len(), "score vectors differ in length");
    &factual - &counterfactual
}
