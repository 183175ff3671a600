//! Training-time corruption of the initial prediction.
//!
//! The probability mask perturbs each label's two-way distribution
//! `(σ(s), σ(-s))` with Gumbel noise and a temperature, so low-confidence
//! labels flip often and confident ones rarely. The random mask then flips a
//! fixed fraction of labels outright.

use ndarray::{Array1, ArrayView1};
use rand::distributions::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::sigmoid;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub tau: f64,
    pub random_rate: f64,
    pub probability_mask: bool,
    pub random_mask: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { tau: 1.0, random_rate: 0.05, probability_mask: true, random_mask: true }
    }
}

impl MaskConfig {
    pub fn disabled() -> Self {
        Self { probability_mask: false, random_mask: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("mask temperature must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.random_rate) {
            return Err(Error::Config(format!("random mask rate {} not in [0,1]", self.random_rate)));
        }
        Ok(())
    }
}

/// Independent streams for the two masks.
#[derive(Debug, Clone)]
pub struct MaskRng {
    gumbel: ChaCha8Rng,
    flips: ChaCha8Rng,
}

impl MaskRng {
    pub fn new(seed: u64) -> Self {
        Self { gumbel: rng::stream(seed, &[0x6a, 0]), flips: rng::stream(seed, &[0x6a, 1]) }
    }
}

/// Pre-drawn randomness for one document, so a masked forward pass can be
/// replayed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskNoise {
    pub gumbel: Vec<[f64; 2]>,
    pub flips: Vec<bool>,
}

impl MaskNoise {
    pub fn sample(cfg: &MaskConfig, labels: usize, rng: &mut MaskRng) -> Self {
        let gumbel = if cfg.probability_mask {
            (0..labels).map(|_| [sample_gumbel(&mut rng.gumbel), sample_gumbel(&mut rng.gumbel)]).collect()
        } else {
            vec![[0.0, 0.0]; labels]
        };
        let flips = if cfg.random_mask {
            sample_flips(cfg.random_rate, labels, &mut rng.flips)
        } else {
            vec![false; labels]
        };
        Self { gumbel, flips }
    }
}

/// `g = -ln(-ln u)`, `u ~ Uniform(0, 1)`.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

fn sample_flips<R: Rng + ?Sized>(rate: f64, labels: usize, rng: &mut R) -> Vec<bool> {
    (0..labels).map(|_| rng.gen::<f64>() < rate).collect()
}

fn log_sigmoid(x: f64) -> f64 {
    // ln σ(x) = -softplus(-x)
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Presence probability of each label after the Gumbel-Softmax perturbation:
/// the first component of `softmax((ln σ([s, -s]) + g) / τ)`.
pub fn probability_mask_with_noise(scores: ArrayView1<'_, f64>, tau: f64, noise: &[[f64; 2]]) -> Array1<f64> {
    assert_eq!(scores.len(), noise.len(), "one noise pair per label");
    scores
        .iter()
        .zip(noise)
        .map(|(&s, g)| {
            let present = log_sigmoid(s) + g[0];
            let absent = log_sigmoid(-s) + g[1];
            // two-way softmax, first component
            sigmoid((present - absent) / tau)
        })
        .collect()
}

/// Samples fresh Gumbel noise unless `noise` is given.
pub fn probability_mask<R: Rng + ?Sized>(
    scores: ArrayView1<'_, f64>,
    cfg: &MaskConfig,
    noise: Option<&[[f64; 2]]>,
    rng: &mut R,
) -> Array1<f64> {
    match noise {
        Some(n) => probability_mask_with_noise(scores, cfg.tau, n),
        None => {
            let n: Vec<[f64; 2]> = (0..scores.len()).map(|_| [sample_gumbel(rng), sample_gumbel(rng)]).collect();
            probability_mask_with_noise(scores, cfg.tau, &n)
        }
    }
}

/// `p → 1 - p` where `flips` is set.
pub fn apply_flips(probs: ArrayView1<'_, f64>, flips: &[bool]) -> Array1<f64> {
    probs.iter().zip(flips).map(|(&p, &f)| if f { 1.0 - p } else { p }).collect()
}

/// Flips each label independently with probability `cfg.random_rate`.
pub fn random_mask<R: Rng + ?Sized>(probs: ArrayView1<'_, f64>, cfg: &MaskConfig, rng: &mut R) -> Array1<f64> {
    let flips = sample_flips(cfg.random_rate, probs.len(), rng);
    apply_flips(probs, &flips)
}
