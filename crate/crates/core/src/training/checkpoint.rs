//! Single-file checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian `u64` metadata length, the JSON
//! metadata, every tensor as little-endian `f64` in canonical order, and a
//! trailing SHA-256 of all preceding bytes.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainingConfig;
use super::trainer::{EpochRecord, TrainedModel};
use crate::corpus::{CooccurrenceMatrix, LabelSpace, Vocabulary};
use crate::error::{Error, Result};
use crate::network::{Dims, NetworkParameters};

const MAGIC: &[u8; 8] = b"CFTCCKP1";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub dims: Dims,
    pub mu: f64,
    pub vocab_hash: String,
    pub label_hash: String,
    pub params_hash: String,
    pub best_epoch: usize,
    pub tensors: Vec<TensorEntry>,
    pub vocabulary: Vocabulary,
    pub labels: LabelSpace,
    pub cooccurrence: Array2<f64>,
    pub config: TrainingConfig,
    pub log: Vec<EpochRecord>,
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

pub(crate) fn encode(model: &TrainedModel) -> Result<Vec<u8>> {
    let tensors = model.params.tensors();
    let meta = CheckpointMetadata {
        dims: model.params.dims,
        mu: model.config.mu,
        vocab_hash: model.vocab.hash(),
        label_hash: model.labels.hash(),
        params_hash: model.params.content_hash(),
        best_epoch: model.best_epoch,
        tensors: tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        vocabulary: model.vocab.clone(),
        labels: model.labels.clone(),
        cooccurrence: model.cooccurrence.raw.clone(),
        config: model.config.clone(),
        log: model.log.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::contract(format!("metadata serialization: {e}")))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + model.params.num_parameters() * 8 + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &tensors {
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    let header = MAGIC.len() + 8;
    if bytes.len() < header + DIGEST_LEN {
        return Err(integrity(format!("checkpoint truncated: {} bytes", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(integrity("not a checkpoint file (bad magic)"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(integrity("checksum mismatch: file is truncated or corrupted"));
    }
    let meta_len = u64::from_le_bytes(body[MAGIC.len()..header].try_into().expect("8 bytes")) as usize;
    let meta_end = header
        .checked_add(meta_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| integrity("metadata length exceeds file size"))?;
    let meta: CheckpointMetadata = serde_json::from_slice(&body[header..meta_end])
        .map_err(|e| integrity(format!("unreadable metadata: {e}")))?;

    let vocab = meta.vocabulary.reindex();
    if vocab.hash() != meta.vocab_hash {
        return Err(integrity("vocabulary hash mismatch between metadata and stored vocabulary"));
    }
    let labels = meta.labels.reindex().map_err(|e| integrity(format!("stored label space invalid: {e}")))?;
    if labels.hash() != meta.label_hash {
        return Err(integrity("label-space hash mismatch between metadata and stored labels"));
    }
    let dims = meta.dims;
    if dims.vocab != vocab.len() || dims.labels != labels.len() {
        return Err(integrity(format!(
            "dimensions {dims:?} disagree with vocabulary ({}) or labels ({})",
            vocab.len(),
            labels.len()
        )));
    }
    dims.validate().map_err(|e| integrity(e.to_string()))?;
    if meta.mu != meta.config.mu {
        return Err(integrity("threshold differs between metadata and config"));
    }
    if meta.cooccurrence.dim() != (dims.labels, dims.labels) {
        return Err(integrity(format!("co-occurrence matrix is {:?}", meta.cooccurrence.dim())));
    }

    let mut params = NetworkParameters::zeros(dims);
    let expected: Vec<TensorEntry> =
        params.tensors().iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect();
    if expected != meta.tensors {
        return Err(integrity("tensor index does not match the declared dimensions"));
    }
    let data = &body[meta_end..];
    if data.len() != params.num_parameters() * 8 {
        return Err(integrity(format!(
            "tensor payload is {} bytes, expected {}",
            data.len(),
            params.num_parameters() * 8
        )));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for (_, slot) in params.tensors_mut() {
        for v in slot.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    if params.content_hash() != meta.params_hash {
        return Err(integrity("parameter hash mismatch"));
    }

    Ok(TrainedModel {
        params,
        vocab,
        labels,
        cooccurrence: CooccurrenceMatrix::from_raw(meta.cooccurrence),
        config: meta.config,
        log: meta.log,
        best_epoch: meta.best_epoch,
    })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};
    use crate::training::{train, Selection};

    fn model() -> TrainedModel {
        let mut spec = SyntheticSpec::shortcut_benchmark(2);
        spec.docs_train = 8;
        spec.docs_test = 2;
        spec.vocab_size = 100;
        let corpus = generate_synthetic(&spec).unwrap().train;
        let cooc = CooccurrenceMatrix::from_corpus(&corpus);
        let mut cfg = TrainingConfig::default();
        cfg.model.word_dim = 4;
        cfg.model.hidden = 3;
        cfg.model.label_dim = 4;
        cfg.model.gcn_hidden = 5;
        cfg.epochs = 1;
        cfg.selection = Selection::Train;
        train(&corpus, &cfg, &cooc).unwrap()
    }

    /// Rewrites the metadata through `edit` and re-seals the file.
    fn tamper(bytes: &[u8], edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let header = MAGIC.len() + 8;
        let len = u64::from_le_bytes(bytes[MAGIC.len()..header].try_into().unwrap()) as usize;
        let mut meta: serde_json::Value = serde_json::from_slice(&bytes[header..header + len]).unwrap();
        edit(&mut meta);
        let json = serde_json::to_vec(&meta).unwrap();
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&bytes[header + len..bytes.len() - DIGEST_LEN]);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.vocab, m.vocab);
        assert_eq!(back.labels, m.labels);
        assert_eq!(back.cooccurrence, m.cooccurrence);
        assert_eq!(back.config, m.config);
        assert_eq!(back.best_epoch, m.best_epoch);
        assert_eq!(back.vocab.index_of(m.vocab.word(5)), Some(5));
        assert_eq!(encode(&back).unwrap(), encode(&m).unwrap());
    }

    #[test]
    fn truncation_and_corruption_are_integrity_errors() {
        let bytes = encode(&model()).unwrap();
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Integrity(_))), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 100;
        flipped[mid] ^= 1;
        assert!(matches!(decode(&flipped), Err(Error::Integrity(_))));
    }

    #[test]
    fn metadata_guards() {
        let bytes = encode(&model()).unwrap();
        let vocab = tamper(&bytes, |m| m["vocab_hash"] = "00".into());
        match decode(&vocab) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("vocabulary")),
            other => panic!("{other:?}"),
        }
        let labels = tamper(&bytes, |m| m["label_hash"] = "00".into());
        assert!(matches!(decode(&labels), Err(Error::Integrity(_))));
        let shape = tamper(&bytes, |m| m["dims"]["hidden"] = 7.into());
        assert!(matches!(decode(&shape), Err(Error::Integrity(_))));
        let untouched = tamper(&bytes, |_| {});
        assert!(decode(&untouched).is_ok());
    }
}
