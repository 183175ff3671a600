use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Architecture sizes fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub labels: usize,
    /// Word embedding width.
    pub word_dim: usize,
    /// Hidden size of each recurrent direction; text states are twice this.
    pub hidden: usize,
    /// Label embedding width, also the width of the pooled label vector.
    pub label_dim: usize,
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
}

impl Dims {
    pub fn text_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `(in, out)` of every graph layer; the last layer returns to `label_dim`.
    pub fn gcn_shapes(&self) -> Vec<(usize, usize)> {
        let n = self.gcn_layers;
        (0..n)
            .map(|i| {
                let d_in = if i == 0 { self.label_dim } else { self.gcn_hidden };
                let d_out = if i + 1 == n { self.label_dim } else { self.gcn_hidden };
                (d_in, d_out)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 3 || self.labels < 2 {
            return Err(Error::contract(format!(
                "vocab must exceed the two specials and labels must be ≥ 2 ({self:?})"
            )));
        }
        if self.word_dim == 0 || self.hidden == 0 || self.label_dim == 0 {
            return Err(Error::contract(format!("zero-width layer in {self:?}")));
        }
        if self.gcn_layers > 1 && self.gcn_hidden == 0 {
            return Err(Error::contract("gcn_hidden must be positive"));
        }
        Ok(())
    }
}

/// Which optimizer a tensor belongs to: the encoder is trained by the text
/// loss only, the decoder by the fused, counterfactual and de-biased losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Encoder,
    Decoder,
}

/// One recurrent direction. Gate rows are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × D_W`
    pub w_ih: Array2<f64>,
    /// `4H × H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
}

impl LstmParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub dims: Dims,
    /// `V × D_W`
    pub word_embeddings: Array2<f64>,
    pub enc_fwd: LstmParams,
    pub enc_bwd: LstmParams,
    /// `L × 2H`
    pub head_t_w: Array2<f64>,
    pub head_t_b: Array1<f64>,
    /// `L × D_L`, selected for labels present in the initial prediction.
    pub label_in: Array2<f64>,
    /// `L × D_L`, selected for absent labels.
    pub label_out: Array2<f64>,
    pub gcn: Vec<Array2<f64>>,
    /// `2H × D_L`
    pub attn_w: Array2<f64>,
    /// `L × (2H + D_L)`, shared by the factual and counterfactual calls.
    pub head_f_w: Array2<f64>,
    pub head_f_b: Array1<f64>,
    /// Proxy text vector standing in for every counterfactual text, `2H`.
    pub proxy: Array1<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..=bound))
}

fn uniform1(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.gen_range(-bound..=bound))
}

const INIT_TAG: u64 = 0x1417;

impl NetworkParameters {
    pub fn zeros(dims: Dims) -> Self {
        let t = dims.text_dim();
        Self {
            dims,
            word_embeddings: Array2::zeros((dims.vocab, dims.word_dim)),
            enc_fwd: LstmParams::zeros(dims.word_dim, dims.hidden),
            enc_bwd: LstmParams::zeros(dims.word_dim, dims.hidden),
            head_t_w: Array2::zeros((dims.labels, t)),
            head_t_b: Array1::zeros(dims.labels),
            label_in: Array2::zeros((dims.labels, dims.label_dim)),
            label_out: Array2::zeros((dims.labels, dims.label_dim)),
            gcn: dims.gcn_shapes().into_iter().map(Array2::zeros).collect(),
            attn_w: Array2::zeros((t, dims.label_dim)),
            head_f_w: Array2::zeros((dims.labels, t + dims.label_dim)),
            head_f_b: Array1::zeros(dims.labels),
            proxy: Array1::zeros(t),
        }
    }

    /// Random initialization. Encoder and decoder tensors draw from separate
    /// streams, so an encoder initialized from `seed` is the same whatever
    /// the decoder looks like.
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims);
        let t = dims.text_dim();

        let mut enc = rng::stream(seed, &[INIT_TAG, 0]);
        let emb_bound = (3.0 / dims.word_dim as f64).sqrt();
        p.word_embeddings = uniform(&mut enc, (dims.vocab, dims.word_dim), emb_bound);
        p.word_embeddings.row_mut(crate::corpus::PAD).fill(0.0);
        let rec_bound = 1.0 / (dims.hidden as f64).sqrt();
        for lstm in [&mut p.enc_fwd, &mut p.enc_bwd] {
            lstm.w_ih = uniform(&mut enc, lstm.w_ih.dim(), rec_bound);
            lstm.w_hh = uniform(&mut enc, lstm.w_hh.dim(), rec_bound);
            lstm.b = uniform1(&mut enc, lstm.b.len(), rec_bound);
        }
        let head_bound = 1.0 / (t as f64).sqrt();
        p.head_t_w = uniform(&mut enc, (dims.labels, t), head_bound);
        p.head_t_b = uniform1(&mut enc, dims.labels, head_bound);

        let mut dec = rng::stream(seed, &[INIT_TAG, 1]);
        p.label_in = uniform(&mut dec, (dims.labels, dims.label_dim), 0.1);
        p.label_out = uniform(&mut dec, (dims.labels, dims.label_dim), 0.1);
        for w in p.gcn.iter_mut() {
            let (i, o) = w.dim();
            *w = uniform(&mut dec, (i, o), (6.0 / (i + o) as f64).sqrt());
        }
        p.attn_w = uniform(&mut dec, (t, dims.label_dim), 1.0 / (dims.label_dim as f64).sqrt());
        let fused_bound = 1.0 / ((t + dims.label_dim) as f64).sqrt();
        p.head_f_w = uniform(&mut dec, (dims.labels, t + dims.label_dim), fused_bound);
        p.head_f_b = uniform1(&mut dec, dims.labels, fused_bound);
        // proxy starts at zero: the counterfactual branch begins at the bias.
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Every tensor with its canonical name, group and shape, in a fixed order.
    pub fn tensors<'a>(&'a self) -> Vec<TensorRef<'a>> {
        let mut out = Vec::new();
        let mut push = |name: String, group: Group, shape: Vec<usize>, data: &'a [f64]| {
            out.push(TensorRef { name, group, shape, data })
        };
        use Group::*;
        push("word_embeddings".into(), Encoder, shape2(&self.word_embeddings), slice2(&self.word_embeddings));
        for (prefix, lstm) in [("enc_fwd", &self.enc_fwd), ("enc_bwd", &self.enc_bwd)] {
            push(format!("{prefix}.W_ih"), Encoder, shape2(&lstm.w_ih), slice2(&lstm.w_ih));
            push(format!("{prefix}.W_hh"), Encoder, shape2(&lstm.w_hh), slice2(&lstm.w_hh));
            push(format!("{prefix}.b"), Encoder, vec![lstm.b.len()], slice1(&lstm.b));
        }
        push("head_T.W".into(), Encoder, shape2(&self.head_t_w), slice2(&self.head_t_w));
        push("head_T.b".into(), Encoder, vec![self.head_t_b.len()], slice1(&self.head_t_b));
        push("label_emb.in".into(), Decoder, shape2(&self.label_in), slice2(&self.label_in));
        push("label_emb.out".into(), Decoder, shape2(&self.label_out), slice2(&self.label_out));
        for (i, w) in self.gcn.iter().enumerate() {
            push(format!("gcn.{i}.W"), Decoder, shape2(w), slice2(w));
        }
        push("attn.W_a".into(), Decoder, shape2(&self.attn_w), slice2(&self.attn_w));
        push("head_fused.W".into(), Decoder, shape2(&self.head_f_w), slice2(&self.head_f_w));
        push("head_fused.b".into(), Decoder, vec![self.head_f_b.len()], slice1(&self.head_f_b));
        push("proxy.h".into(), Decoder, vec![self.proxy.len()], slice1(&self.proxy));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(Group, &mut [f64])> {
        use Group::*;
        let mut out: Vec<(Group, &mut [f64])> = Vec::new();
        out.push((Encoder, slice2_mut(&mut self.word_embeddings)));
        for lstm in [&mut self.enc_fwd, &mut self.enc_bwd] {
            out.push((Encoder, slice2_mut(&mut lstm.w_ih)));
            out.push((Encoder, slice2_mut(&mut lstm.w_hh)));
            out.push((Encoder, slice1_mut(&mut lstm.b)));
        }
        out.push((Encoder, slice2_mut(&mut self.head_t_w)));
        out.push((Encoder, slice1_mut(&mut self.head_t_b)));
        out.push((Decoder, slice2_mut(&mut self.label_in)));
        out.push((Decoder, slice2_mut(&mut self.label_out)));
        for w in self.gcn.iter_mut() {
            out.push((Decoder, slice2_mut(w)));
        }
        out.push((Decoder, slice2_mut(&mut self.attn_w)));
        out.push((Decoder, slice2_mut(&mut self.head_f_w)));
        out.push((Decoder, slice1_mut(&mut self.head_f_b)));
        out.push((Decoder, slice1_mut(&mut self.proxy)));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// SHA-256 over the little-endian bytes of every tensor.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.num_parameters() * 8);
        for t in self.tensors() {
            for v in t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::hash::sha256_hex(&bytes)
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src: Vec<&[f64]> = other.tensors().into_iter().map(|t| t.data).collect();
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Squared L2 norm of the tensors in `group`.
    pub fn squared_norm(&self, group: Group) -> f64 {
        self.tensors()
            .iter()
            .filter(|t| t.group == group)
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn scale_group(&mut self, group: Group, factor: f64) {
        for (g, t) in self.tensors_mut() {
            if g == group {
                t.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    pub fn zero_group(&mut self, group: Group) {
        self.scale_group(group, 0.0);
    }
}

pub struct TensorRef<'a> {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

fn shape2(a: &Array2<f64>) -> Vec<usize> {
    a.shape().to_vec()
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are standard-layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are standard-layout")
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are standard-layout")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are standard-layout")
}
