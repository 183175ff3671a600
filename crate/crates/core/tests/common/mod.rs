//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cftc::corpus::normalize_cooccurrence;
use cftc::network::{
    backward, forward_traced, Branch, Dims, MaskConfig, MaskNoise, MaskRng, Mode, NetworkParameters, Routing,
};
use cftc::training::{combined_loss, combined_loss_with_grads, LossWeights};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random network with one document and fixed mask noise.
pub struct Instance {
    pub params: NetworkParameters,
    pub tokens: Vec<usize>,
    pub normalized: Array2<f64>,
    pub truth: Vec<bool>,
    pub mask: MaskConfig,
    pub noise: MaskNoise,
    pub mu: f64,
}

pub fn random_dims(rng: &mut ChaCha8Rng) -> Dims {
    Dims {
        vocab: rng.gen_range(4..=12),
        labels: rng.gen_range(2..=5),
        word_dim: rng.gen_range(2..=8),
        hidden: rng.gen_range(2..=8),
        label_dim: rng.gen_range(2..=8),
        gcn_hidden: rng.gen_range(2..=8),
        gcn_layers: rng.gen_range(0..=3),
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

/// Raw conditional co-occurrence with a unit diagonal.
pub fn random_cooccurrence(rng: &mut ChaCha8Rng, labels: usize) -> Array2<f64> {
    Array2::from_shape_fn((labels, labels), |(i, j)| if i == j { 1.0 } else { rng.gen_range(0.0..1.0) })
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = random_dims(&mut rng);
    let mut params = NetworkParameters::init(dims, seed).unwrap();
    // spread the decoder so every path carries signal
    params.label_in = random_matrix(&mut rng, dims.labels, dims.label_dim, 1.0);
    params.label_out = random_matrix(&mut rng, dims.labels, dims.label_dim, 1.0);
    params.proxy = Array1::from_shape_simple_fn(dims.text_dim(), || rng.gen_range(-1.0..1.0));
    params.attn_w = random_matrix(&mut rng, dims.text_dim(), dims.label_dim, 1.5);
    let m = rng.gen_range(1..=7);
    let tokens = (0..m).map(|_| rng.gen_range(1..dims.vocab)).collect();
    let normalized = normalize_cooccurrence(random_cooccurrence(&mut rng, dims.labels).view());
    let truth = (0..dims.labels).map(|_| rng.gen_bool(0.5)).collect();
    let mask = MaskConfig { random_rate: 0.3, ..MaskConfig::default() };
    let noise = MaskNoise::sample(&mask, dims.labels, &mut MaskRng::new(seed));
    Instance { params, tokens, normalized, truth, mask, noise, mu: 0.5 }
}

impl Instance {
    pub fn loss(&self, params: &NetworkParameters, weights: &LossWeights) -> (f64, Vec<bool>) {
        let mode = Mode::Train { mask: &self.mask, noise: &self.noise };
        let (bundle, _) = forward_traced(&self.tokens, self.normalized.view(), params, self.mu, mode, None).unwrap();
        (combined_loss(&bundle, &self.truth, weights).total, bundle.selected)
    }

    pub fn analytic(&self, weights: &LossWeights, routing: Routing) -> NetworkParameters {
        let mode = Mode::Train { mask: &self.mask, noise: &self.noise };
        let (bundle, trace) =
            forward_traced(&self.tokens, self.normalized.view(), &self.params, self.mu, mode, None).unwrap();
        let (_, dscores) = combined_loss_with_grads(&bundle, &self.truth, weights);
        let mut grad = self.params.zeros_like();
        backward(&self.params, &trace, &dscores, routing, self.normalized.view(), &mut grad);
        grad
    }

    /// Smallest |pre-activation| over every graph layer and the smallest
    /// distance of a selection probability from the threshold.
    pub fn kink_margin(&self) -> f64 {
        let mode = Mode::Train { mask: &self.mask, noise: &self.noise };
        let (bundle, _) =
            forward_traced(&self.tokens, self.normalized.view(), &self.params, self.mu, mode, None).unwrap();
        let mut li = dense_embed(&bundle.selected, &self.params);
        let mut margin = f64::INFINITY;
        for w in &self.params.gcn {
            let pre = self.normalized.dot(&li).dot(w);
            margin = margin.min(pre.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs())));
            li = pre.mapv(|v| v.max(0.0));
        }
        let probs = cftc::network::probability_mask_with_noise(bundle.s_text.view(), self.mask.tau, &self.noise.gumbel);
        let probs = cftc::network::apply_flips(probs.view(), &self.noise.flips);
        for p in probs.iter() {
            margin = margin.min((p - self.mu).abs());
        }
        margin
    }
}

/// Per-tensor maximum relative error between the analytic gradient and a
/// central difference of the loss.
pub struct GradientCheck {
    pub worst: f64,
    pub worst_tensor: String,
    pub compared: usize,
    /// The finite difference changed the selected label set.
    pub selection_moved: bool,
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-6;

pub fn gradient_check(inst: &Instance, weights: &LossWeights) -> GradientCheck {
    let grad = inst.analytic(weights, Routing::Full);
    let analytic: Vec<(String, Vec<f64>)> =
        grad.tensors().into_iter().map(|t| (t.name, t.data.to_vec())).collect();
    let (_, base_sel) = inst.loss(&inst.params, weights);
    let mut out = GradientCheck { worst: 0.0, worst_tensor: String::new(), compared: 0, selection_moved: false };
    let mut probe = inst.params.clone();
    for (k, (name, ana)) in analytic.iter().enumerate() {
        for (idx, &a) in ana.iter().enumerate() {
            let original = probe.tensors()[k].data[idx];
            set(&mut probe, k, idx, original + FD_STEP);
            let (up, sel_up) = inst.loss(&probe, weights);
            set(&mut probe, k, idx, original - FD_STEP);
            let (down, sel_down) = inst.loss(&probe, weights);
            set(&mut probe, k, idx, original);
            if sel_up != base_sel || sel_down != base_sel {
                out.selection_moved = true;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            out.compared += 1;
            if rel > out.worst {
                out.worst = rel;
                out.worst_tensor = format!("{name}[{idx}] analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    out
}

fn set(p: &mut NetworkParameters, tensor: usize, idx: usize, value: f64) {
    let mut t = p.tensors_mut();
    t[tensor].1[idx] = value;
}

/// Checks every loss term over `instances` seeds, skipping instances that
/// sit within `margin` of a ReLU or threshold kink. Returns the worst error.
pub fn gradient_suite(seeds: std::ops::Range<u64>, margin: f64) -> (f64, String, usize) {
    let mut worst = (0.0, String::new());
    let mut checked = 0;
    for seed in seeds {
        let inst = random_instance(seed);
        if inst.kink_margin() < margin {
            continue;
        }
        for branch in Branch::ALL {
            let r = gradient_check(&inst, &LossWeights::only(branch));
            assert!(!r.selection_moved, "seed {seed}: selection moved despite margin");
            if r.worst > worst.0 {
                worst = (r.worst, format!("seed {seed} term {}: {}", branch.name(), r.worst_tensor));
            }
        }
        checked += 1;
    }
    (worst.0, worst.1, checked)
}

pub fn dense_embed(selected: &[bool], params: &NetworkParameters) -> Array2<f64> {
    let (l, d) = params.label_in.dim();
    let mut out = Array2::zeros((l, d));
    for i in 0..l {
        for j in 0..d {
            out[[i, j]] = if selected[i] { params.label_in[[i, j]] } else { params.label_out[[i, j]] };
        }
    }
    out
}

/// Label information by explicit loops: select rows, apply each layer as
/// `max(0, Σ_k Σ_r M̂[i,k]·X[k,r]·W[r,c])`, then average the rows.
pub fn dense_extract_li(selected: &[bool], normalized: &Array2<f64>, params: &NetworkParameters) -> Vec<f64> {
    let l = selected.len();
    let mut x: Vec<Vec<f64>> = (0..l)
        .map(|i| {
            let src = if selected[i] { &params.label_in } else { &params.label_out };
            src.row(i).to_vec()
        })
        .collect();
    for w in &params.gcn {
        let (d_in, d_out) = w.dim();
        let mut next = vec![vec![0.0; d_out]; l];
        for i in 0..l {
            for c in 0..d_out {
                let mut acc = 0.0;
                for k in 0..l {
                    for r in 0..d_in {
                        acc += normalized[[i, k]] * x[k][r] * w[[r, c]];
                    }
                }
                next[i][c] = if acc > 0.0 { acc } else { 0.0 };
            }
        }
        x = next;
    }
    let d = x[0].len();
    (0..d).map(|c| x.iter().map(|row| row[c]).sum::<f64>() / l as f64).collect()
}

/// Brute-force cell counting for the metric oracles.
pub struct Counts {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub mismatches: f64,
    pub cells: f64,
}

pub fn brute_counts(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> Counts {
    let mut c = Counts { tp: 0.0, fp: 0.0, fn_: 0.0, mismatches: 0.0, cells: 0.0 };
    for n in 0..truth.len() {
        for l in 0..truth[n].len() {
            let (t, p) = (truth[n][l], pred[n][l]);
            c.cells += 1.0;
            if t != p {
                c.mismatches += 1.0;
            }
            if t && p {
                c.tp += 1.0;
            }
            if !t && p {
                c.fp += 1.0;
            }
            if t && !p {
                c.fn_ += 1.0;
            }
        }
    }
    c
}

/// Per-document Hamming losses averaged over documents, then P/R/F1 by the
/// textbook formulas with 0 for empty denominators.
pub fn brute_metrics(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> (f64, f64, f64, f64) {
    let per_doc: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| t.iter().zip(p).filter(|(a, b)| a != b).count() as f64 / t.len() as f64)
        .sum::<f64>()
        / truth.len() as f64;
    let c = brute_counts(truth, pred);
    let p = if c.tp + c.fp > 0.0 { c.tp / (c.tp + c.fp) } else { 0.0 };
    let r = if c.tp + c.fn_ > 0.0 { c.tp / (c.tp + c.fn_) } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (per_doc, p, r, f)
}
