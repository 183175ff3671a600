//! The full two-pass forward computation and its gradient.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::encoder::{encode_backward, encode_traced, mean_rows, sigmoid, EncoderTrace};
use super::mask::{apply_flips, probability_mask_with_noise, MaskConfig, MaskNoise, MaskRng};
use super::ops::{debias, graph_traced, softmax, threshold_predict, threshold_probs, GraphTrace};
use super::params::NetworkParameters;
use crate::error::{Error, Result};

/// The four prediction heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Text-only first pass.
    Text,
    /// Text fused with label information.
    Fused,
    /// Proxy text fused with label information.
    Counterfactual,
    /// Fused minus counterfactual.
    Debiased,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Text, Branch::Fused, Branch::Counterfactual, Branch::Debiased];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Text => "T",
            Branch::Fused => "T+LI",
            Branch::Counterfactual => "T*+LI",
            Branch::Debiased => "cd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    pub mu: f64,
    pub s_text: Array1<f64>,
    pub s_fused: Array1<f64>,
    pub s_counterfactual: Array1<f64>,
    pub s_debiased: Array1<f64>,
    /// The (possibly masked or overridden) label set fed to the extractor.
    pub selected: Vec<bool>,
}

impl PredictionBundle {
    pub fn scores(&self, b: Branch) -> &Array1<f64> {
        match b {
            Branch::Text => &self.s_text,
            Branch::Fused => &self.s_fused,
            Branch::Counterfactual => &self.s_counterfactual,
            Branch::Debiased => &self.s_debiased,
        }
    }

    pub fn probs(&self, b: Branch) -> Array1<f64> {
        self.scores(b).mapv(sigmoid)
    }

    pub fn predict(&self, b: Branch) -> Vec<bool> {
        threshold_predict(self.scores(b).view(), self.mu)
    }
}

/// Where the label set fed to the extractor comes from.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Thresholded text prediction, corrupted by the masks.
    Train { mask: &'a MaskConfig, noise: &'a MaskNoise },
    /// Thresholded text prediction as is.
    Infer,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    encoder: EncoderTrace,
    h: Array2<f64>,
    pooled: Array1<f64>,
    graph: GraphTrace,
    li: Array1<f64>,
    query: Array1<f64>,
    attention: Array1<f64>,
    h_ti: Array1<f64>,
    selected: Vec<bool>,
}

impl ForwardTrace {
    pub fn attention(&self) -> &Array1<f64> {
        &self.attention
    }

    pub fn text_states(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn label_information(&self) -> &Array1<f64> {
        &self.li
    }
}

fn selection(
    s_text: ArrayView1<'_, f64>,
    mu: f64,
    mode: Mode<'_>,
    given: Option<&[bool]>,
) -> Result<Vec<bool>> {
    let l = s_text.len();
    if let Some(g) = given {
        if g.len() != l {
            return Err(Error::contract(format!("given labels have length {}, expected {l}", g.len())));
        }
        return Ok(g.to_vec());
    }
    Ok(match mode {
        Mode::Infer => threshold_predict(s_text, mu),
        Mode::Train { mask, noise } => {
            if noise.gumbel.len() != l || noise.flips.len() != l {
                return Err(Error::contract("mask noise length differs from label count"));
            }
            let mut probs = s_text.mapv(sigmoid);
            if mask.probability_mask {
                probs = probability_mask_with_noise(s_text, mask.tau, &noise.gumbel);
            }
            if mask.random_mask {
                probs = apply_flips(probs.view(), &noise.flips);
            }
            threshold_probs(probs.view(), mu)
        }
    })
}

/// Runs the whole pipeline on one tokenized document.
pub fn forward_traced(
    tokens: &[usize],
    normalized: ArrayView2<'_, f64>,
    params: &NetworkParameters,
    mu: f64,
    mode: Mode<'_>,
    given: Option<&[bool]>,
) -> Result<(PredictionBundle, ForwardTrace)> {
    let l = params.dims.labels;
    if normalized.dim() != (l, l) {
        return Err(Error::contract(format!("co-occurrence matrix is {:?}, expected {l}×{l}", normalized.dim())));
    }
    let (h, encoder) = encode_traced(tokens, params)?;
    let pooled = mean_rows(h.view());
    let s_text = params.head_t_w.dot(&pooled) + &params.head_t_b;
    let selected = selection(s_text.view(), mu, mode, given)?;

    let (li, graph) = graph_traced(&selected, normalized, params);
    let query = params.attn_w.dot(&li);
    let attention = softmax(h.dot(&query).view());
    let h_ti = h.t().dot(&attention);

    let factual_in = concatenate(Axis(0), &[h_ti.view(), li.view()]).expect("1-d");
    let proxy_in = concatenate(Axis(0), &[params.proxy.view(), li.view()]).expect("1-d");
    let s_fused = params.head_f_w.dot(&factual_in) + &params.head_f_b;
    let s_counterfactual = params.head_f_w.dot(&proxy_in) + &params.head_f_b;
    let s_debiased = debias(s_fused.view(), s_counterfactual.view());

    let trace =
        ForwardTrace { encoder, h, pooled, graph, li, query, attention, h_ti, selected: selected.clone() };
    let bundle = PredictionBundle { mu, s_text, s_fused, s_counterfactual, s_debiased, selected };
    Ok((bundle, trace))
}

/// Forward pass without a trace.
pub fn forward(
    tokens: &[usize],
    normalized: ArrayView2<'_, f64>,
    params: &NetworkParameters,
    mu: f64,
    mode: Mode<'_>,
    given: Option<&[bool]>,
) -> Result<PredictionBundle> {
    forward_traced(tokens, normalized, params, mu, mode, given).map(|(b, _)| b)
}

/// Train-mode forward drawing fresh mask noise from `rng`.
pub fn forward_train(
    tokens: &[usize],
    normalized: ArrayView2<'_, f64>,
    params: &NetworkParameters,
    mu: f64,
    mask: &MaskConfig,
    rng: &mut MaskRng,
) -> Result<PredictionBundle> {
    let noise = MaskNoise::sample(mask, params.dims.labels, rng);
    forward(tokens, normalized, params, mu, Mode::Train { mask, noise: &noise }, None)
}

/// Loss gradients with respect to each branch's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrads {
    pub text: Array1<f64>,
    pub fused: Array1<f64>,
    pub counterfactual: Array1<f64>,
    pub debiased: Array1<f64>,
}

impl ScoreGrads {
    pub fn zeros(labels: usize) -> Self {
        let z = Array1::zeros(labels);
        Self { text: z.clone(), fused: z.clone(), counterfactual: z.clone(), debiased: z }
    }

    fn decoder_is_zero(&self) -> bool {
        [&self.fused, &self.counterfactual, &self.debiased].iter().all(|a| a.iter().all(|&v| v == 0.0))
    }
}

/// How gradients from the fused branches reach the text encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// Exact gradient of the composed function.
    Full,
    /// The fused branches see a gradient-stopped copy of the text states, so
    /// the encoder and text head learn from the text loss alone.
    Routed,
}

/// Accumulates `∂loss/∂params` into `grad`.
pub fn backward(
    params: &NetworkParameters,
    trace: &ForwardTrace,
    dscores: &ScoreGrads,
    routing: Routing,
    normalized: ArrayView2<'_, f64>,
    grad: &mut NetworkParameters,
) {
    let t_dim = params.dims.text_dim();
    let m = trace.h.nrows();
    let mut dh = Array2::<f64>::zeros(trace.h.dim());

    if !dscores.decoder_is_zero() {
        let d_fused = &dscores.fused + &dscores.debiased;
        let d_cf = &dscores.counterfactual - &dscores.debiased;

        // shared fusion head
        let factual_in = concatenate(Axis(0), &[trace.h_ti.view(), trace.li.view()]).expect("1-d");
        let proxy_in = concatenate(Axis(0), &[params.proxy.view(), trace.li.view()]).expect("1-d");
        add_outer(&mut grad.head_f_w, d_fused.view(), factual_in.view());
        add_outer(&mut grad.head_f_w, d_cf.view(), proxy_in.view());
        grad.head_f_b += &d_fused;
        grad.head_f_b += &d_cf;
        let dx_f = params.head_f_w.t().dot(&d_fused);
        let dx_cf = params.head_f_w.t().dot(&d_cf);
        let dh_ti = dx_f.slice(s![..t_dim]).to_owned();
        let mut dli = &dx_f.slice(s![t_dim..]) + &dx_cf.slice(s![t_dim..]);
        grad.proxy += &dx_cf.slice(s![..t_dim]);

        // attention pooling h_TI = Hᵀ A, A = softmax(H q)
        let d_att = trace.h.dot(&dh_ti);
        let weighted = trace.attention.dot(&d_att);
        let d_logits = &trace.attention * &(d_att - weighted);
        let dq = trace.h.t().dot(&d_logits);
        add_outer(&mut grad.attn_w, dq.view(), trace.li.view());
        dli += &params.attn_w.t().dot(&dq);
        if routing == Routing::Full {
            add_outer(&mut dh, trace.attention.view(), dh_ti.view());
            add_outer(&mut dh, d_logits.view(), trace.query.view());
        }

        // graph layers, last to first; LI = mean over label rows
        let l = params.dims.labels;
        let mut d_layer = Array2::from_shape_fn((l, dli.len()), |(_, j)| dli[j] / l as f64);
        for k in (0..params.gcn.len()).rev() {
            let out = &trace.graph.layers[k + 1];
            let dz = Array2::from_shape_fn(out.dim(), |ij| if out[ij] > 0.0 { d_layer[ij] } else { 0.0 });
            grad.gcn[k] += &trace.graph.propagated[k].t().dot(&dz);
            d_layer = normalized.t().dot(&dz.dot(&params.gcn[k].t()));
        }
        for (i, row) in d_layer.rows().into_iter().enumerate() {
            let mut target = if trace.selected[i] { grad.label_in.row_mut(i) } else { grad.label_out.row_mut(i) };
            target += &row;
        }
    }

    // text head on mean-pooled states
    if dscores.text.iter().any(|&v| v != 0.0) {
        add_outer(&mut grad.head_t_w, dscores.text.view(), trace.pooled.view());
        grad.head_t_b += &dscores.text;
        let dpooled = params.head_t_w.t().dot(&dscores.text) / m as f64;
        dh += &dpooled;
    }

    if dh.iter().any(|&v| v != 0.0) {
        encode_backward(params, &trace.encoder, dh.view(), grad);
    }
}

fn add_outer(target: &mut Array2<f64>, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = target.row_mut(i);
        row.scaled_add(ai, &b);
    }
}
