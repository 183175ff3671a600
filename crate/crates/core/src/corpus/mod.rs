//! Dataset ingestion, label spaces and vocabularies.
//!
//! A dataset file is UTF-8 text with one document per line:
//! `<text>\t<comma-separated label names>`. The label field may be empty.

mod cooccurrence;
mod synthetic;
mod vocab;

pub use cooccurrence::{
    compute_cooccurrence, matrix_csv, normalize_cooccurrence, write_matrix_csv, CooccurrenceMatrix,
    DEGREE_FLOOR,
};
pub use synthetic::{generate_synthetic, ShortcutPair, SyntheticData, SyntheticSpec};
pub use vocab::{build_vocabulary, Vocabulary, PAD, UNK};

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_hex;

/// Default token budget per document.
pub const DEFAULT_MAX_LEN: usize = 256;

/// A binary label vector over a fixed label space.
pub type LabelVector = Vec<bool>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: LabelVector,
}

/// Ordered label names with their training-split frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    names: Vec<String>,
    counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new(names: Vec<String>, counts: Vec<usize>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::contract(format!(
                "label space needs at least two labels, got {}",
                names.len()
            )));
        }
        if counts.len() != names.len() {
            return Err(Error::contract("label counts and names differ in length"));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.contains(',') || name.contains('\t') {
                return Err(Error::contract(format!("invalid label name {name:?}")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::contract(format!("duplicate label name {name:?}")));
            }
        }
        Ok(Self { names, counts, index })
    }

    /// Rebuilds the lookup table after deserialization.
    pub(crate) fn reindex(mut self) -> Result<Self> {
        let names = std::mem::take(&mut self.names);
        let counts = std::mem::take(&mut self.counts);
        Self::new(names, counts)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.names.join("\n").as_bytes())
    }

    /// Parses a comma-separated list of label names into a label vector.
    pub fn parse_set(&self, field: &str) -> std::result::Result<LabelVector, String> {
        let mut out = vec![false; self.len()];
        for name in field.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match self.index_of(name) {
                Some(i) => out[i] = true,
                None => return Err(name.to_string()),
            }
        }
        Ok(out)
    }

    /// Renders a label vector as names, or `∅` when empty.
    pub fn format_set(&self, labels: &[bool]) -> String {
        let names: Vec<&str> = labels
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| self.name(i))
            .collect();
        if names.is_empty() {
            "∅".to_string()
        } else {
            names.join(",")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub labels: LabelSpace,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_matrix(&self) -> Vec<LabelVector> {
        self.documents.iter().map(|d| d.labels.clone()).collect()
    }

    pub fn mean_labels_per_doc(&self) -> f64 {
        if self.documents.is_empty() {
            return 0.0;
        }
        let total: usize = self
            .documents
            .iter()
            .map(|d| d.labels.iter().filter(|&&b| b).count())
            .sum();
        total as f64 / self.documents.len() as f64
    }

    /// Splits off the trailing `fraction` of documents (after a seeded
    /// shuffle of indices) as a held-out set.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> (Corpus, Corpus) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut crate::rng::stream(seed, &[0x51e7]));
        let n_hold = ((self.len() as f64) * fraction).round() as usize;
        let n_hold = n_hold.min(self.len().saturating_sub(1));
        let (hold, keep) = idx.split_at(n_hold);
        let pick = |ids: &[usize]| {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            Corpus {
                documents: ids.iter().map(|&i| self.documents[i].clone()).collect(),
                labels: self.labels.clone(),
            }
        };
        (pick(keep), pick(hold))
    }
}

/// Which split a dataset file belongs to. Test splits are mapped onto the
/// label space of the training split.
#[derive(Debug, Clone, Copy)]
pub enum Split<'a> {
    Train,
    Test(&'a LabelSpace),
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub max_len: usize,
    pub drop_unlabeled: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { max_len: DEFAULT_MAX_LEN, drop_unlabeled: false }
    }
}

/// Lowercases, splits on whitespace and punctuation, truncates to `max_len`.
pub fn tokenize(text: &str, max_len: usize) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(max_len)
        .map(str::to_lowercase)
        .collect()
}

struct RawRecord {
    line: usize,
    tokens: Vec<String>,
    labels: Vec<String>,
}

fn parse_records(path: &Path, text: &str, opts: &LoadOptions) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: message.to_string(),
        };
        let (body, label_field) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected <text><TAB><labels>"))?;
        if label_field.contains('\t') {
            return Err(parse_err("more than one TAB separator"));
        }
        let tokens = tokenize(body, opts.max_len);
        if tokens.is_empty() {
            return Err(parse_err("text has no tokens"));
        }
        let mut labels = Vec::new();
        for name in label_field.split(',').map(str::trim) {
            if name.is_empty() {
                continue;
            }
            if !labels.iter().any(|l: &String| l == name) {
                labels.push(name.to_string());
            }
        }
        out.push(RawRecord { line: lineno, tokens, labels });
    }
    Ok(out)
}

/// Reads a dataset file. Documents keep file order; ids are `<stem>:<line>`.
pub fn load_dataset(path: &Path, split: Split<'_>, opts: &LoadOptions) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)?;
    let mut records = parse_records(path, &text, opts)?;
    if opts.drop_unlabeled {
        records.retain(|r| !r.labels.is_empty());
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }

    let labels = match split {
        Split::Train => {
            let names: BTreeSet<&String> = records.iter().flat_map(|r| r.labels.iter()).collect();
            let names: Vec<String> = names.into_iter().cloned().collect();
            let mut counts = vec![0usize; names.len()];
            for r in &records {
                for l in &r.labels {
                    let i = names.binary_search(l).expect("name collected above");
                    counts[i] += 1;
                }
            }
            LabelSpace::new(names, counts).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: e.to_string(),
            })?
        }
        Split::Test(space) => space.clone(),
    };

    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("doc");
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    let documents = records
        .into_iter()
        .map(|r| {
            let mut vec = vec![false; labels.len()];
            for name in &r.labels {
                match labels.index_of(name) {
                    Some(i) => vec[i] = true,
                    None => {
                        dropped.insert(name.clone());
                    }
                }
            }
            Document { id: format!("{stem}:{}", r.line), tokens: r.tokens, labels: vec }
        })
        .collect();
    if !dropped.is_empty() {
        log::warn!(
            "{}: dropped labels absent from the training label space: {}",
            path.display(),
            dropped.into_iter().collect::<Vec<_>>().join(",")
        );
    }
    Ok(Corpus { documents, labels })
}

/// Serializes a corpus in the dataset file format.
pub fn format_dataset(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.documents {
        let names: Vec<&str> = doc
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| corpus.labels.name(i))
            .collect();
        let _ = writeln!(out, "{}\t{}", doc.tokens.join(" "), names.join(","));
    }
    out
}

pub fn write_dataset(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(format_dataset(corpus).as_bytes())?;
    f.flush()?;
    Ok(())
}
