//! Synthetic corpora with a planted label-correlation shortcut.
//!
//! Every label owns a block of signal tokens; the remaining vocabulary is
//! noise. Label sets are drawn from per-label marginals, except that for each
//! shortcut pair `(a, b)` the conditional `P(b | a)` is pinned to a
//! split-specific value while `P(b)` keeps its marginal. A pair that is
//! strongly coupled in training and decoupled at test time lets a classifier
//! that leans on label→label correlation be told apart from one that reads
//! the text.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{compute_cooccurrence, Corpus, Document, LabelSpace};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutPair {
    /// Driving label.
    pub a: usize,
    /// Dependent label.
    pub b: usize,
    /// `P(b | a)` in the training split.
    pub train_prob: f64,
    /// `P(b | a)` in the test split.
    pub test_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub labels: usize,
    pub vocab_size: usize,
    pub docs_train: usize,
    pub docs_test: usize,
    pub tokens_per_doc: usize,
    pub shortcut_pairs: Vec<ShortcutPair>,
    pub base_label_prob: Vec<f64>,
    pub tokens_per_label: usize,
    pub noise_token_fraction: f64,
    pub seed: u64,
}

pub struct SyntheticData {
    pub train: Corpus,
    pub test: Corpus,
    /// Conditional co-occurrence measured on the generated test split.
    pub true_test_cooccurrence: Array2<f64>,
}

const KEYS: &[&str] = &[
    "labels",
    "vocab_size",
    "docs_train",
    "docs_test",
    "tokens_per_doc",
    "shortcut_pairs",
    "base_label_prob",
    "tokens_per_label",
    "noise_token_fraction",
    "seed",
];

impl SyntheticSpec {
    /// The desk-scale shortcut benchmark: ten labels, one pair coupled at
    /// 0.9 in training and 0.1 at test time.
    pub fn shortcut_benchmark(seed: u64) -> Self {
        Self {
            labels: 10,
            vocab_size: 200,
            docs_train: 5000,
            docs_test: 1000,
            tokens_per_doc: 12,
            shortcut_pairs: vec![ShortcutPair { a: 0, b: 1, train_prob: 0.9, test_prob: 0.1 }],
            base_label_prob: vec![0.3; 10],
            tokens_per_label: 6,
            noise_token_fraction: 0.5,
            seed,
        }
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let labels: usize = kv.require("labels")?;
        let base_raw = kv
            .raw("base_label_prob")
            .ok_or_else(|| Error::Config("missing required key \"base_label_prob\"".into()))?;
        let base: Vec<f64> = base_raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("base_label_prob: cannot parse {base_raw:?}")))?;
        let base_label_prob = match base.len() {
            1 => vec![base[0]; labels],
            n if n == labels => base,
            n => {
                return Err(Error::Config(format!(
                    "base_label_prob has {n} entries, expected 1 or {labels}"
                )))
            }
        };
        let pairs_raw = kv
            .raw("shortcut_pairs")
            .ok_or_else(|| Error::Config("missing required key \"shortcut_pairs\"".into()))?;
        let shortcut_pairs = parse_pairs(pairs_raw)?;
        let spec = Self {
            labels,
            vocab_size: kv.require("vocab_size")?,
            docs_train: kv.require("docs_train")?,
            docs_test: kv.require("docs_test")?,
            tokens_per_doc: kv.require("tokens_per_doc")?,
            shortcut_pairs,
            base_label_prob,
            tokens_per_label: kv.require("tokens_per_label")?,
            noise_token_fraction: kv.require("noise_token_fraction")?,
            seed: kv.get("seed")?.unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    /// Renders the spec in its key=value form.
    pub fn to_kv_string(&self) -> String {
        let pairs: Vec<String> = self
            .shortcut_pairs
            .iter()
            .map(|p| format!("{}:{}:{}:{}", p.a, p.b, p.train_prob, p.test_prob))
            .collect();
        let probs: Vec<String> = self.base_label_prob.iter().map(|p| p.to_string()).collect();
        format!(
            "labels = {}\nvocab_size = {}\ndocs_train = {}\ndocs_test = {}\ntokens_per_doc = {}\n\
             shortcut_pairs = {}\nbase_label_prob = {}\ntokens_per_label = {}\n\
             noise_token_fraction = {}\nseed = {}\n",
            self.labels,
            self.vocab_size,
            self.docs_train,
            self.docs_test,
            self.tokens_per_doc,
            pairs.join(";"),
            probs.join(","),
            self.tokens_per_label,
            self.noise_token_fraction,
            self.seed
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.labels < 2 {
            return bad(format!("labels must be at least 2, got {}", self.labels));
        }
        if self.docs_train == 0 || self.docs_test == 0 || self.tokens_per_doc == 0 {
            return bad("docs_train, docs_test and tokens_per_doc must be positive".into());
        }
        if self.tokens_per_label == 0 {
            return bad("tokens_per_label must be positive".into());
        }
        if self.labels * self.tokens_per_label >= self.vocab_size {
            return bad(format!(
                "vocab_size {} leaves no noise tokens after {} signal tokens",
                self.vocab_size,
                self.labels * self.tokens_per_label
            ));
        }
        if !(0.0..1.0).contains(&self.noise_token_fraction) {
            return bad(format!("noise_token_fraction {} not in [0,1)", self.noise_token_fraction));
        }
        if self.base_label_prob.len() != self.labels {
            return bad("base_label_prob length differs from labels".into());
        }
        for &p in &self.base_label_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0,1]"));
            }
        }
        let mut used = vec![false; self.labels];
        for pair in &self.shortcut_pairs {
            for &p in &[pair.train_prob, pair.test_prob] {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("probability {p} outside [0,1]"));
                }
            }
            if pair.a >= self.labels || pair.b >= self.labels || pair.a == pair.b {
                return bad(format!("invalid shortcut pair ({}, {})", pair.a, pair.b));
            }
            for idx in [pair.a, pair.b] {
                if std::mem::replace(&mut used[idx], true) {
                    return bad(format!("label {idx} appears in more than one shortcut pair"));
                }
            }
        }
        Ok(())
    }

    fn label_names(&self) -> Vec<String> {
        let width = (self.labels - 1).to_string().len();
        (0..self.labels).map(|i| format!("L{i:0width$}")).collect()
    }

    fn token_name(&self, id: usize) -> String {
        let width = (self.vocab_size - 1).to_string().len();
        format!("w{id:0width$}")
    }
}

fn parse_pairs(raw: &str) -> Result<Vec<ShortcutPair>> {
    let mut out = Vec::new();
    for item in raw.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        let err = || Error::Config(format!("shortcut pair {item:?}: expected a:b:train:test"));
        if parts.len() != 4 {
            return Err(err());
        }
        out.push(ShortcutPair {
            a: parts[0].parse().map_err(|_| err())?,
            b: parts[1].parse().map_err(|_| err())?,
            train_prob: parts[2].parse().map_err(|_| err())?,
            test_prob: parts[3].parse().map_err(|_| err())?,
        });
    }
    Ok(out)
}

/// `P(b | ¬a)` that keeps `P(b)` at its marginal given `P(b | a) = q`.
fn complement_prob(p_a: f64, p_b: f64, q: f64) -> Result<f64> {
    if p_a >= 1.0 {
        return if (q - p_b).abs() < 1e-12 {
            Ok(0.0)
        } else {
            Err(Error::Infeasible(format!(
                "P(a) = 1 forces P(b|a) = P(b) = {p_b}, requested {q}"
            )))
        };
    }
    let r = (p_b - p_a * q) / (1.0 - p_a);
    if !(-1e-12..=1.0 + 1e-12).contains(&r) {
        return Err(Error::Infeasible(format!(
            "marginals P(a) = {p_a}, P(b) = {p_b} cannot reach P(b|a) = {q} (needs P(b|¬a) = {r:.4})"
        )));
    }
    Ok(r.clamp(0.0, 1.0))
}

struct LabelSampler {
    /// For each label: `None` if independent, else `(driver, P(b|a), P(b|¬a))`.
    dependent: Vec<Option<(usize, f64, f64)>>,
    marginals: Vec<f64>,
}

impl LabelSampler {
    fn new(spec: &SyntheticSpec, test_split: bool) -> Result<Self> {
        let mut dependent = vec![None; spec.labels];
        for pair in &spec.shortcut_pairs {
            let q = if test_split { pair.test_prob } else { pair.train_prob };
            let r = complement_prob(spec.base_label_prob[pair.a], spec.base_label_prob[pair.b], q)?;
            dependent[pair.b] = Some((pair.a, q, r));
        }
        Ok(Self { dependent, marginals: spec.base_label_prob.clone() })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let l = self.marginals.len();
        let mut out = vec![false; l];
        for i in 0..l {
            if self.dependent[i].is_none() {
                out[i] = rng.gen::<f64>() < self.marginals[i];
            }
        }
        for i in 0..l {
            if let Some((a, q, r)) = self.dependent[i] {
                let p = if out[a] { q } else { r };
                out[i] = rng.gen::<f64>() < p;
            }
        }
        out
    }
}

fn generate_split(
    spec: &SyntheticSpec,
    sampler: &LabelSampler,
    n: usize,
    tag: u64,
    prefix: &str,
    names: &[String],
) -> Result<Corpus> {
    let mut label_rng = rng::stream(spec.seed, &[tag, 1]);
    let mut token_rng = rng::stream(spec.seed, &[tag, 2]);
    let signal = spec.labels * spec.tokens_per_label;
    let noise_count = spec.vocab_size - signal;
    let mut documents = Vec::with_capacity(n);
    let mut counts = vec![0usize; spec.labels];
    for d in 0..n {
        let labels = sampler.sample(&mut label_rng);
        let present: Vec<usize> =
            labels.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        for &i in &present {
            counts[i] += 1;
        }
        let tokens = (0..spec.tokens_per_doc)
            .map(|_| {
                let noise = present.is_empty() || token_rng.gen::<f64>() < spec.noise_token_fraction;
                let id = if noise {
                    signal + token_rng.gen_range(0..noise_count)
                } else {
                    let label = present[token_rng.gen_range(0..present.len())];
                    label * spec.tokens_per_label + token_rng.gen_range(0..spec.tokens_per_label)
                };
                spec.token_name(id)
            })
            .collect();
        documents.push(Document { id: format!("{prefix}-{d}"), tokens, labels });
    }
    Ok(Corpus { documents, labels: LabelSpace::new(names.to_vec(), counts)? })
}

/// Generates a train/test pair. Deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let train_sampler = LabelSampler::new(spec, false)?;
    let test_sampler = LabelSampler::new(spec, true)?;
    let names = spec.label_names();
    let train = generate_split(spec, &train_sampler, spec.docs_train, 0x7a11, "train", &names)?;
    let mut test = generate_split(spec, &test_sampler, spec.docs_test, 0x7e57, "test", &names)?;
    // The test split shares the training label space, frequencies included.
    test.labels = train.labels.clone();
    let true_test_cooccurrence = compute_cooccurrence(&test);
    Ok(SyntheticData { train, test, true_test_cooccurrence })
}
