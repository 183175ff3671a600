//! The differentiable classifier: parameters, forward operations, masks and
//! the hand-derived backward pass.

pub(crate) mod encoder;
mod mask;
mod model;
mod ops;
mod params;

pub use mask::{
    apply_flips, probability_mask, probability_mask_with_noise, random_mask, sample_gumbel, MaskConfig,
    MaskNoise, MaskRng,
};
pub use model::{
    backward, forward, forward_train, forward_traced, Branch, ForwardTrace, Mode, PredictionBundle, Routing,
    ScoreGrads,
};
pub use ops::{
    attention_weights, debias, embed_labels, encode_text, extract_li, fuse_score, gcn_layer, li_attention,
    logistic, score_text, threshold_predict, threshold_probs,
};
pub use params::{Dims, Group, LstmParams, NetworkParameters, TensorRef};
