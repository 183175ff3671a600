//! Binary cross-entropy terms and their weighted combination.

use ndarray::{Array1, ArrayView1};

use crate::network::{logistic, Branch, PredictionBundle, ScoreGrads};

/// Probabilities are clamped to `[ε, 1 - ε]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// `-(1/L) Σ [y ln p + (1 - y) ln(1 - p)]`.
pub fn bce_loss(probs: ArrayView1<'_, f64>, truth: &[bool]) -> f64 {
    assert_eq!(probs.len(), truth.len(), "probabilities and truth differ in length");
    let l = probs.len() as f64;
    -probs
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / l
}

/// Loss of `logistic(scores)` and its gradient with respect to `scores`.
/// The gradient vanishes where the clamp is active.
pub fn bce_with_grad(scores: ArrayView1<'_, f64>, truth: &[bool]) -> (f64, Array1<f64>) {
    let probs = scores.mapv(logistic);
    let loss = bce_loss(probs.view(), truth);
    let l = scores.len() as f64;
    let grad = probs
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                0.0
            } else {
                (p - if y { 1.0 } else { 0.0 }) / l
            }
        })
        .collect();
    (loss, grad)
}

/// Per-term weights. `text` is 1 in normal training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub text: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { text: 1.0, alpha, beta, gamma }
    }

    pub fn weight(&self, b: Branch) -> f64 {
        match b {
            Branch::Text => self.text,
            Branch::Fused => self.alpha,
            Branch::Counterfactual => self.beta,
            Branch::Debiased => self.gamma,
        }
    }

    /// Only the given branch, with unit weight.
    pub fn only(b: Branch) -> Self {
        let mut w = Self { text: 0.0, alpha: 0.0, beta: 0.0, gamma: 0.0 };
        match b {
            Branch::Text => w.text = 1.0,
            Branch::Fused => w.alpha = 1.0,
            Branch::Counterfactual => w.beta = 1.0,
            Branch::Debiased => w.gamma = 1.0,
        }
        w
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub text: f64,
    pub fused: f64,
    pub counterfactual: f64,
    pub debiased: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn term(&self, b: Branch) -> f64 {
        match b {
            Branch::Text => self.text,
            Branch::Fused => self.fused,
            Branch::Counterfactual => self.counterfactual,
            Branch::Debiased => self.debiased,
        }
    }

    fn term_mut(&mut self, b: Branch) -> &mut f64 {
        match b {
            Branch::Text => &mut self.text,
            Branch::Fused => &mut self.fused,
            Branch::Counterfactual => &mut self.counterfactual,
            Branch::Debiased => &mut self.debiased,
        }
    }

    pub(crate) fn accumulate(&mut self, other: &LossBreakdown) {
        for b in Branch::ALL {
            *self.term_mut(b) += other.term(b);
        }
        self.total += other.total;
    }

    pub(crate) fn averaged(&self, count: usize) -> LossBreakdown {
        let n = count as f64;
        LossBreakdown {
            text: self.text / n,
            fused: self.fused / n,
            counterfactual: self.counterfactual / n,
            debiased: self.debiased / n,
            total: self.total / n,
        }
    }
}

/// `w_T·L_T + α·L_{T+LI} + β·L_{T*+LI} + γ·L_cd` with every term reported.
pub fn combined_loss(bundle: &PredictionBundle, truth: &[bool], w: &LossWeights) -> LossBreakdown {
    combined_loss_with_grads(bundle, truth, w).0
}

pub fn combined_loss_with_grads(
    bundle: &PredictionBundle,
    truth: &[bool],
    w: &LossWeights,
) -> (LossBreakdown, ScoreGrads) {
    let mut out = LossBreakdown::default();
    let mut grads = ScoreGrads::zeros(truth.len());
    for b in Branch::ALL {
        let (loss, g) = bce_with_grad(bundle.scores(b).view(), truth);
        *out.term_mut(b) = loss;
        out.total += w.weight(b) * loss;
        let slot = match b {
            Branch::Text => &mut grads.text,
            Branch::Fused => &mut grads.fused,
            Branch::Counterfactual => &mut grads.counterfactual,
            Branch::Debiased => &mut grads.debiased,
        };
        *slot = g * w.weight(b);
    }
    (out, grads)
}
