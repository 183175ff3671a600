//! Bidirectional LSTM text encoder with hand-written backpropagation.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::{LstmParams, NetworkParameters};
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one direction, rows in processing order.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    x: Array2<f64>,
    /// Post-activation gates `[i, f, g, o]`, `m × 4H`.
    gates: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

fn lstm_forward(p: &LstmParams, x: Array2<f64>) -> LstmTrace {
    let m = x.nrows();
    let hd = p.w_hh.ncols();
    let mut gates = x.dot(&p.w_ih.t()) + &p.b;
    let mut c = Array2::<f64>::zeros((m, hd));
    let mut h = Array2::<f64>::zeros((m, hd));
    let mut h_prev = Array1::<f64>::zeros(hd);
    let mut c_prev = Array1::<f64>::zeros(hd);
    for t in 0..m {
        let mut z = gates.row_mut(t);
        z += &p.w_hh.dot(&h_prev);
        for k in 0..hd {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hd + k]);
            let g = z[2 * hd + k].tanh();
            let o = sigmoid(z[3 * hd + k]);
            z[k] = i;
            z[hd + k] = f;
            z[2 * hd + k] = g;
            z[3 * hd + k] = o;
            let ct = f * c_prev[k] + i * g;
            c[[t, k]] = ct;
            h[[t, k]] = o * ct.tanh();
        }
        h_prev.assign(&h.row(t));
        c_prev.assign(&c.row(t));
    }
    LstmTrace { x, gates, c, h }
}

/// Accumulates parameter gradients into `grad`, returns `∂/∂x`.
fn lstm_backward(p: &LstmParams, tr: &LstmTrace, dh_out: ArrayView2<'_, f64>, grad: &mut LstmParams) -> Array2<f64> {
    let m = tr.x.nrows();
    let hd = p.w_hh.ncols();
    let mut dpre = Array2::<f64>::zeros((m, 4 * hd));
    let mut dh_next = Array1::<f64>::zeros(hd);
    let mut dc_next = Array1::<f64>::zeros(hd);
    for t in (0..m).rev() {
        let g = tr.gates.row(t);
        for k in 0..hd {
            let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
            let ct = tr.c[[t, k]];
            let tc = ct.tanh();
            let c_prev = if t > 0 { tr.c[[t - 1, k]] } else { 0.0 };
            let dh = dh_out[[t, k]] + dh_next[k];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            let d_i = dc * gg;
            let d_g = dc * i;
            let d_f = dc * c_prev;
            dc_next[k] = dc * f;
            dpre[[t, k]] = d_i * i * (1.0 - i);
            dpre[[t, hd + k]] = d_f * f * (1.0 - f);
            dpre[[t, 2 * hd + k]] = d_g * (1.0 - gg * gg);
            dpre[[t, 3 * hd + k]] = d_o * o * (1.0 - o);
        }
        dh_next = p.w_hh.t().dot(&dpre.row(t));
    }
    grad.w_ih += &dpre.t().dot(&tr.x);
    if m > 1 {
        grad.w_hh += &dpre.slice(s![1.., ..]).t().dot(&tr.h.slice(s![..m - 1, ..]));
    }
    grad.b += &dpre.sum_axis(Axis(0));
    dpre.dot(&p.w_ih)
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderTrace {
    tokens: Vec<usize>,
    fwd: LstmTrace,
    bwd: LstmTrace,
}

pub(crate) fn check_tokens(tokens: &[usize], vocab: usize) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::contract("token sequence is empty"));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(Error::contract(format!("token index {bad} out of range for vocabulary of {vocab}")));
    }
    Ok(())
}

/// Runs both directions; returns `H` (`m × 2H`, forward states then backward
/// states per row) and the trace needed for backpropagation.
pub(crate) fn encode_traced(tokens: &[usize], params: &NetworkParameters) -> Result<(Array2<f64>, EncoderTrace)> {
    check_tokens(tokens, params.dims.vocab)?;
    let m = tokens.len();
    let hd = params.dims.hidden;
    let emb = &params.word_embeddings;
    let x = Array2::from_shape_fn((m, params.dims.word_dim), |(t, j)| emb[[tokens[t], j]]);
    let x_rev = Array2::from_shape_fn(x.dim(), |(t, j)| x[[m - 1 - t, j]]);
    let fwd = lstm_forward(&params.enc_fwd, x);
    let bwd = lstm_forward(&params.enc_bwd, x_rev);
    let mut h = Array2::<f64>::zeros((m, 2 * hd));
    h.slice_mut(s![.., ..hd]).assign(&fwd.h);
    for t in 0..m {
        h.slice_mut(s![t, hd..]).assign(&bwd.h.row(m - 1 - t));
    }
    Ok((h, EncoderTrace { tokens: tokens.to_vec(), fwd, bwd }))
}

/// Backpropagates `∂/∂H` into the encoder parameters and word embeddings.
pub(crate) fn encode_backward(
    params: &NetworkParameters,
    trace: &EncoderTrace,
    dh: ArrayView2<'_, f64>,
    grad: &mut NetworkParameters,
) {
    let m = trace.tokens.len();
    let hd = params.dims.hidden;
    let dh_f = dh.slice(s![.., ..hd]);
    let dh_b = Array2::from_shape_fn((m, hd), |(t, k)| dh[[m - 1 - t, hd + k]]);
    let dx_f = lstm_backward(&params.enc_fwd, &trace.fwd, dh_f, &mut grad.enc_fwd);
    let dx_b = lstm_backward(&params.enc_bwd, &trace.bwd, dh_b.view(), &mut grad.enc_bwd);
    for (t, &tok) in trace.tokens.iter().enumerate() {
        let mut row = grad.word_embeddings.row_mut(tok);
        row += &dx_f.row(t);
        row += &dx_b.row(m - 1 - t);
    }
}

pub(crate) fn mean_rows(h: ArrayView2<'_, f64>) -> Array1<f64> {
    h.mean_axis(Axis(0)).expect("at least one row")
}

pub(crate) fn affine(w: &Array2<f64>, x: ArrayView1<'_, f64>, b: &Array1<f64>) -> Array1<f64> {
    w.dot(&x) + b
}
