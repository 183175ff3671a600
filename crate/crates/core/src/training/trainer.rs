//! The optimization loop, model selection and the standalone text trainer.

use std::time::Instant;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{clip_group, Adam};
use super::config::{EncoderMode, Selection, TrainingConfig};
use super::loss::{bce_with_grad, combined_loss_with_grads, LossBreakdown, LossWeights};
use crate::corpus::{build_vocabulary, CooccurrenceMatrix, Corpus, LabelSpace, LabelVector, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::Confusion;
use crate::network::{
    backward, forward, forward_traced, Branch, Group, MaskConfig, MaskNoise, MaskRng, Mode, NetworkParameters, Routing,
};
use crate::rng;

const SPLIT_TAG: u64 = 0x5b1;
const SHUFFLE_TAG: u64 = 0x5f1;
const MASK_TAG: u64 = 0x3a5;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_text: f64,
    pub loss_fused: f64,
    pub loss_counterfactual: f64,
    pub loss_debiased: f64,
    pub loss_total: f64,
    /// Hamming loss of the headline branch on the selection documents.
    pub selection_hamming: f64,
    pub selection_micro_f1: f64,
    /// Wall-clock time; not stored in checkpoints.
    #[serde(skip)]
    pub seconds: f64,
}

pub const LOG_HEADER: &str = "epoch,L_T,L_T+LI,L_T*+LI,L_cd,total,val_hamming,val_micro_f1";

/// The training log as CSV, header included. Wall-clock time is left out so
/// that identical runs produce identical files.
pub fn format_log(records: &[EpochRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.loss_text,
            r.loss_fused,
            r.loss_counterfactual,
            r.loss_debiased,
            r.loss_total,
            r.selection_hamming,
            r.selection_micro_f1
        ));
    }
    out
}

/// A trained network with everything needed to apply it to new text.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: NetworkParameters,
    pub vocab: Vocabulary,
    pub labels: LabelSpace,
    pub cooccurrence: CooccurrenceMatrix,
    pub config: TrainingConfig,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn headline(&self) -> Branch {
        self.config.headline()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.vocab.encode_document(tokens)
    }
}

/// Encoded documents with their label vectors.
struct Encoded {
    tokens: Vec<Vec<usize>>,
    labels: Vec<LabelVector>,
}

impl Encoded {
    fn new(corpus: &Corpus, vocab: &Vocabulary) -> Self {
        Self {
            tokens: corpus.documents.iter().map(|d| vocab.encode_document(&d.tokens)).collect(),
            labels: corpus.documents.iter().map(|d| d.labels.clone()).collect(),
        }
    }

    fn len(&self) -> usize {
        self.tokens.len()
    }
}

struct Prepared {
    vocab: Vocabulary,
    fit: Encoded,
    select: Encoded,
}

fn prepare(corpus: &Corpus, config: &TrainingConfig) -> Result<Prepared> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("training corpus has no documents".into()));
    }
    let m = &config.model;
    let (fit, select) = match config.selection {
        Selection::Validation => {
            if corpus.len() < 2 {
                return Err(Error::EmptyInput("validation selection needs at least two documents".into()));
            }
            let (fit, held) =
                corpus.split_holdout(config.validation_fraction, rng::derive_seed(config.seed, &[SPLIT_TAG]));
            (fit, Some(held))
        }
        Selection::Train => (corpus.clone(), None),
    };
    let vocab = build_vocabulary(&fit, m.min_freq, m.max_vocab);
    let fit_enc = Encoded::new(&fit, &vocab);
    let select_enc = Encoded::new(select.as_ref().unwrap_or(&fit), &vocab);
    Ok(Prepared { vocab, fit: fit_enc, select: select_enc })
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[SHUFFLE_TAG, epoch as u64]));
    order
}

fn check_finite(loss: &LossBreakdown, epoch: usize, batch: usize) -> Result<()> {
    let terms = [
        ("L_T", loss.text),
        ("L_T+LI", loss.fused),
        ("L_T*+LI", loss.counterfactual),
        ("L_cd", loss.debiased),
        ("total", loss.total),
    ];
    for (term, value) in terms {
        if !value.is_finite() {
            return Err(Error::NonFinite { epoch, batch, term, value });
        }
    }
    Ok(())
}

/// Clips and applies a group's averaged gradient.
fn update_group(
    opt: &mut Adam,
    params: &mut NetworkParameters,
    grad: &mut NetworkParameters,
    group: Group,
    clip: f64,
    epoch: usize,
    batch: usize,
) -> Result<()> {
    let norm = clip_group(grad, group, clip);
    if !norm.is_finite() {
        let term = match group {
            Group::Encoder => "encoder gradient",
            Group::Decoder => "decoder gradient",
        };
        return Err(Error::NonFinite { epoch, batch, term, value: norm });
    }
    opt.step(params, grad, group);
    Ok(())
}

/// Confusion counts of `branch` over a set of encoded documents, infer mode.
fn score_documents(
    docs: &Encoded,
    params: &NetworkParameters,
    normalized: ArrayView2<'_, f64>,
    mu: f64,
    branch: Branch,
) -> Result<Confusion> {
    let mut c = Confusion::default();
    for (tokens, truth) in docs.tokens.iter().zip(&docs.labels) {
        let bundle = forward(tokens, normalized, params, mu, Mode::Infer, None)?;
        for (&t, p) in truth.iter().zip(bundle.predict(branch)) {
            c.add(t, p);
        }
    }
    Ok(c)
}

/// Trains the full model on `corpus`.
pub fn train(corpus: &Corpus, config: &TrainingConfig, cooccurrence: &CooccurrenceMatrix) -> Result<TrainedModel> {
    let prep = prepare(corpus, config)?;
    let labels = corpus.labels.len();
    if cooccurrence.num_labels() != labels {
        return Err(Error::contract(format!(
            "co-occurrence matrix covers {} labels, corpus has {labels}",
            cooccurrence.num_labels()
        )));
    }
    let dims = config.model.dims(prep.vocab.len(), labels);
    let mut params = NetworkParameters::init(dims, config.seed)?;
    let mut train_encoder = true;
    if config.encoder_mode == EncoderMode::Frozen {
        let run = fit_text_only(&prep, config, params)?;
        params = run.params;
        train_encoder = false;
    }

    let normalized = cooccurrence.normalized.view();
    let mask = config.effective_mask();
    let mut weights = config.loss_weights();
    if !train_encoder {
        weights.text = 0.0;
    }
    let headline = config.headline();
    let mut opt = Adam::new(&params, config.learning_rate);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, NetworkParameters)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let order = epoch_order(prep.fit.len(), config.seed, epoch);
        let mut sum = LossBreakdown::default();
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_no = b + 1;
            let mut rng = MaskRng::new(rng::derive_seed(config.seed, &[MASK_TAG, epoch as u64, b as u64]));
            let mut grad = params.zeros_like();
            for &i in batch {
                let (loss, _) = accumulate_document(
                    &prep.fit.tokens[i],
                    &prep.fit.labels[i],
                    &params,
                    normalized,
                    config.mu,
                    &mask,
                    &weights,
                    &mut rng,
                    &mut grad,
                )?;
                check_finite(&loss, epoch, batch_no)?;
                sum.accumulate(&loss);
            }
            grad.scale(1.0 / batch.len() as f64);
            if train_encoder {
                update_group(&mut opt, &mut params, &mut grad, Group::Encoder, config.clip_norm, epoch, batch_no)?;
            }
            update_group(&mut opt, &mut params, &mut grad, Group::Decoder, config.clip_norm, epoch, batch_no)?;
        }
        let mean = sum.averaged(prep.fit.len());
        let sel = score_documents(&prep.select, &params, normalized, config.mu, headline)?;
        let f1 = sel.prf().f1;
        log.push(EpochRecord {
            epoch,
            loss_text: mean.text,
            loss_fused: mean.fused,
            loss_counterfactual: mean.counterfactual,
            loss_debiased: mean.debiased,
            loss_total: mean.total,
            selection_hamming: sel.hamming_loss(),
            selection_micro_f1: f1,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: total loss {:.5}, selection micro-F1 {:.4} ({:.1}s)",
            mean.total,
            f1,
            started.elapsed().as_secs_f64()
        );
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
            best = Some((f1, epoch, params.clone()));
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainedModel {
        params,
        vocab: prep.vocab,
        labels: corpus.labels.clone(),
        cooccurrence: cooccurrence.clone(),
        config: config.clone(),
        log,
        best_epoch,
    })
}

/// Forward and backward for one document; gradients are summed into `grad`.
#[allow(clippy::too_many_arguments)]
fn accumulate_document(
    tokens: &[usize],
    truth: &[bool],
    params: &NetworkParameters,
    normalized: ArrayView2<'_, f64>,
    mu: f64,
    mask: &MaskConfig,
    weights: &LossWeights,
    rng: &mut MaskRng,
    grad: &mut NetworkParameters,
) -> Result<(LossBreakdown, Vec<bool>)> {
    let noise = MaskNoise::sample(mask, params.dims.labels, rng);
    let (bundle, trace) = forward_traced(tokens, normalized, params, mu, Mode::Train { mask, noise: &noise }, None)?;
    let (loss, dscores) = combined_loss_with_grads(&bundle, truth, weights);
    if loss.total.is_finite() {
        backward(params, &trace, &dscores, Routing::Routed, normalized, grad);
    }
    Ok((loss, bundle.selected))
}

/// Result of training the text encoder and head alone.
#[derive(Debug, Clone)]
pub struct TextOnlyRun {
    pub params: NetworkParameters,
    pub vocab: Vocabulary,
    /// Mean text loss of each epoch.
    pub text_loss: Vec<f64>,
}

/// Trains only the text encoder and text head on the text loss, with the
/// same data order, initialization and optimizer settings as [`train`].
/// Decoder tensors keep their initial values.
pub fn train_text_only(corpus: &Corpus, config: &TrainingConfig) -> Result<TextOnlyRun> {
    let prep = prepare(corpus, config)?;
    let dims = config.model.dims(prep.vocab.len(), corpus.labels.len());
    let params = NetworkParameters::init(dims, config.seed)?;
    fit_text_only(&prep, config, params)
}

fn fit_text_only(prep: &Prepared, config: &TrainingConfig, mut params: NetworkParameters) -> Result<TextOnlyRun> {
    use crate::network::encoder::{encode_backward, encode_traced, mean_rows};

    let mut opt = Adam::new(&params, config.learning_rate);
    let mut text_loss = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let order = epoch_order(prep.fit.len(), config.seed, epoch);
        let mut sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = params.zeros_like();
            for &i in batch {
                let (h, trace) = encode_traced(&prep.fit.tokens[i], &params)?;
                let pooled = mean_rows(h.view());
                let scores = params.head_t_w.dot(&pooled) + &params.head_t_b;
                let (loss, dscores) = bce_with_grad(scores.view(), &prep.fit.labels[i]);
                if !loss.is_finite() {
                    return Err(Error::NonFinite { epoch, batch: b + 1, term: "L_T", value: loss });
                }
                sum += loss;
                for (k, &d) in dscores.iter().enumerate() {
                    if d != 0.0 {
                        grad.head_t_w.row_mut(k).scaled_add(d, &pooled);
                    }
                }
                grad.head_t_b += &dscores;
                if dscores.iter().any(|&v| v != 0.0) {
                    let mut dh = ndarray::Array2::<f64>::zeros(h.dim());
                    dh += &(params.head_t_w.t().dot(&dscores) / h.nrows() as f64);
                    encode_backward(&params, &trace, dh.view(), &mut grad);
                }
            }
            grad.scale(1.0 / batch.len() as f64);
            update_group(&mut opt, &mut params, &mut grad, Group::Encoder, config.clip_norm, epoch, b + 1)?;
        }
        text_loss.push(sum / prep.fit.len() as f64);
    }
    Ok(TextOnlyRun { params, vocab: prep.vocab.clone(), text_loss })
}
