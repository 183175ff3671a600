//! Counterfactual multi-label text classification.
//!
//! A text-only first pass predicts a label set; that prediction is embedded
//! and propagated over the label co-occurrence graph to obtain a label
//! information vector, which steers attention over the text for a second,
//! fused prediction. The same fused head applied to a learned proxy text
//! vector estimates what the label information alone would predict, and
//! subtracting that estimate removes the label→label shortcut from the final
//! score.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod kv;
pub mod network;
pub mod rng;
pub mod training;

mod hash;

pub use error::{Error, ErrorKind, Result};
pub use hash::sha256_hex;
