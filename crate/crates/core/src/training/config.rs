//! Training hyperparameters and their flat key=value form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::network::{Dims, MaskConfig};

use super::loss::LossWeights;

/// How the text encoder is optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderMode {
    /// Encoder learns from the text loss while the decoder trains alongside.
    Routed,
    /// Encoder is pre-trained on the text loss, then frozen for decoder training.
    Frozen,
}

impl FromStr for EncoderMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "routed" => Ok(Self::Routed),
            "frozen" => Ok(Self::Frozen),
            other => Err(Error::Config(format!("encoder_mode must be routed or frozen, got {other:?}"))),
        }
    }
}

impl EncoderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Routed => "routed",
            Self::Frozen => "frozen",
        }
    }
}

/// Which documents pick the best epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Train,
    Validation,
}

impl FromStr for Selection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "validation" => Ok(Self::Validation),
            other => Err(Error::Config(format!("selection must be train or validation, got {other:?}"))),
        }
    }
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
        }
    }
}

/// Architecture and preprocessing sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub hidden: usize,
    pub label_dim: usize,
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
    pub min_freq: usize,
    pub max_vocab: Option<usize>,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 300,
            hidden: 300,
            label_dim: 300,
            gcn_hidden: 300,
            gcn_layers: 3,
            min_freq: 1,
            max_vocab: None,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, vocab: usize, labels: usize) -> Dims {
        Dims {
            vocab,
            labels,
            word_dim: self.word_dim,
            hidden: self.hidden,
            label_dim: self.label_dim,
            gcn_hidden: self.gcn_hidden,
            gcn_layers: self.gcn_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub mask: MaskConfig,
    pub mu: f64,
    pub disable_mask: bool,
    pub disable_debias: bool,
    pub encoder_mode: EncoderMode,
    pub selection: Selection,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Gradient norm cap, applied to the encoder and decoder separately.
    pub clip_norm: f64,
    pub model: ModelConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            gamma: 1.0,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 50,
            mask: MaskConfig::default(),
            mu: 0.5,
            disable_mask: false,
            disable_debias: false,
            encoder_mode: EncoderMode::Routed,
            selection: Selection::Validation,
            validation_fraction: 0.1,
            seed: 0,
            clip_norm: 5.0,
            model: ModelConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "learning_rate",
    "batch_size",
    "epochs",
    "mu",
    "tau",
    "mask_rate",
    "probability_mask",
    "random_mask",
    "disable_mask",
    "disable_debias",
    "encoder_mode",
    "selection",
    "validation_fraction",
    "seed",
    "clip_norm",
    "word_dim",
    "hidden_dim",
    "label_dim",
    "gcn_hidden",
    "gcn_layers",
    "min_freq",
    "max_vocab",
    "max_len",
];

impl TrainingConfig {
    /// Reads the keys present in `kv`; anything absent keeps its default.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let d = Self::default();
        let m = &d.model;
        let model = ModelConfig {
            word_dim: kv.get("word_dim")?.unwrap_or(m.word_dim),
            hidden: kv.get("hidden_dim")?.unwrap_or(m.hidden),
            label_dim: kv.get("label_dim")?.unwrap_or(m.label_dim),
            gcn_hidden: kv.get("gcn_hidden")?.unwrap_or(m.gcn_hidden),
            gcn_layers: kv.get("gcn_layers")?.unwrap_or(m.gcn_layers),
            min_freq: kv.get("min_freq")?.unwrap_or(m.min_freq),
            max_vocab: match kv.raw("max_vocab") {
                None | Some("none") => None,
                Some(_) => kv.get("max_vocab")?,
            },
            max_len: kv.get("max_len")?.unwrap_or(m.max_len),
        };
        let mask = MaskConfig {
            tau: kv.get("tau")?.unwrap_or(d.mask.tau),
            random_rate: kv.get("mask_rate")?.unwrap_or(d.mask.random_rate),
            probability_mask: kv.get_bool("probability_mask")?.unwrap_or(d.mask.probability_mask),
            random_mask: kv.get_bool("random_mask")?.unwrap_or(d.mask.random_mask),
        };
        let cfg = Self {
            alpha: kv.get("alpha")?.unwrap_or(d.alpha),
            beta: kv.get("beta")?.unwrap_or(d.beta),
            gamma: kv.get("gamma")?.unwrap_or(d.gamma),
            learning_rate: kv.get("learning_rate")?.unwrap_or(d.learning_rate),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            epochs: kv.get("epochs")?.unwrap_or(d.epochs),
            mask,
            mu: kv.get("mu")?.unwrap_or(d.mu),
            disable_mask: kv.get_bool("disable_mask")?.unwrap_or(d.disable_mask),
            disable_debias: kv.get_bool("disable_debias")?.unwrap_or(d.disable_debias),
            encoder_mode: kv.get::<String>("encoder_mode")?.map(|s| s.parse()).transpose()?.unwrap_or(d.encoder_mode),
            selection: kv.get::<String>("selection")?.map(|s| s.parse()).transpose()?.unwrap_or(d.selection),
            validation_fraction: kv.get("validation_fraction")?.unwrap_or(d.validation_fraction),
            seed: kv.get("seed")?.unwrap_or(d.seed),
            clip_norm: kv.get("clip_norm")?.unwrap_or(d.clip_norm),
            model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    /// Every key with its resolved value; parsing the result gives `self` back.
    pub fn to_kv_string(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("gamma", self.gamma.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("mu", self.mu.to_string());
        put("tau", self.mask.tau.to_string());
        put("mask_rate", self.mask.random_rate.to_string());
        put("probability_mask", self.mask.probability_mask.to_string());
        put("random_mask", self.mask.random_mask.to_string());
        put("disable_mask", self.disable_mask.to_string());
        put("disable_debias", self.disable_debias.to_string());
        put("encoder_mode", self.encoder_mode.as_str().to_string());
        put("selection", self.selection.as_str().to_string());
        put("validation_fraction", self.validation_fraction.to_string());
        put("seed", self.seed.to_string());
        put("clip_norm", self.clip_norm.to_string());
        put("word_dim", m.word_dim.to_string());
        put("hidden_dim", m.hidden.to_string());
        put("label_dim", m.label_dim.to_string());
        put("gcn_hidden", m.gcn_hidden.to_string());
        put("gcn_layers", m.gcn_layers.to_string());
        put("min_freq", m.min_freq.to_string());
        put("max_vocab", m.max_vocab.map_or_else(|| "none".to_string(), |v| v.to_string()));
        put("max_len", m.max_len.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be a finite non-negative weight, got {w}"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu must lie in (0,1), got {}", self.mu));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction must lie in (0,1), got {}", self.validation_fraction));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.model.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        self.mask.validate()
    }

    /// Mask settings after the ablation switch.
    pub fn effective_mask(&self) -> MaskConfig {
        if self.disable_mask {
            MaskConfig { probability_mask: false, random_mask: false, ..self.mask }
        } else {
            self.mask
        }
    }

    /// Loss weights after the ablation switch.
    pub fn loss_weights(&self) -> LossWeights {
        let gamma = if self.disable_debias { 0.0 } else { self.gamma };
        LossWeights::new(self.alpha, self.beta, gamma)
    }

    /// The branch whose predictions are reported and used for selection.
    pub fn headline(&self) -> crate::network::Branch {
        if self.disable_debias {
            crate::network::Branch::Fused
        } else {
            crate::network::Branch::Debiased
        }
    }
}
