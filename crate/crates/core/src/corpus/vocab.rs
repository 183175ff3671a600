use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::hash::sha256_hex;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Word ↔ index map. Indices 0 and 1 are reserved for padding and unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from retained words, in rank order, without the specials.
    pub fn from_words(words: Vec<String>) -> Self {
        let mut all = Vec::with_capacity(words.len() + 2);
        all.push(PAD_TOKEN.to_string());
        all.push(UNK_TOKEN.to_string());
        all.extend(words);
        Self::from_full_list(all)
    }

    fn from_full_list(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub(crate) fn reindex(self) -> Self {
        Self::from_full_list(self.words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() <= 2
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Maps tokens to indices, unknown words to [`UNK`].
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.index_of(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// Like [`encode`](Self::encode), but an empty document becomes a single
    /// [`UNK`] so the encoder always sees at least one step.
    pub fn encode_document<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let ids = self.encode(tokens);
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.words.join("\n").as_bytes())
    }
}

/// Keeps words with frequency ≥ `min_freq`, most frequent first (ties broken
/// lexicographically), at most `max_size` of them.
pub fn build_vocabulary(corpus: &Corpus, min_freq: usize, max_size: Option<usize>) -> Vocabulary {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for doc in &corpus.documents {
        for t in &doc.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|&(w, n)| n >= min_freq && w != PAD_TOKEN && w != UNK_TOKEN)
        .collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if let Some(max) = max_size {
        ranked.truncate(max);
    }
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelSpace};

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus {
            documents: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document {
                    id: i.to_string(),
                    tokens: t.split_whitespace().map(String::from).collect(),
                    labels: vec![true, false],
                })
                .collect(),
            labels: LabelSpace::new(vec!["a".into(), "b".into()], vec![1, 0]).unwrap(),
        }
    }

    #[test]
    fn min_freq_filters() {
        let v = build_vocabulary(&corpus(&["a a b", "a c"]), 2, None);
        assert_eq!(v.len(), 3);
        assert_eq!(v.index_of("a"), Some(2));
        assert_eq!(v.index_of("b"), None);
        assert_eq!(v.word(PAD), "<pad>");
        assert_eq!(v.word(UNK), "<unk>");
    }

    #[test]
    fn unbounded_keeps_everything_in_rank_order() {
        let v = build_vocabulary(&corpus(&["c b b", "a c c"]), 1, None);
        let words: Vec<&str> = (2..v.len()).map(|i| v.word(i)).collect();
        assert_eq!(words, vec!["c", "b", "a"]);
    }

    #[test]
    fn tie_break_is_lexicographic_and_truncation_applies() {
        let v = build_vocabulary(&corpus(&["z y x"]), 1, Some(2));
        assert_eq!(v.len(), 4);
        assert_eq!(v.word(2), "x");
        assert_eq!(v.word(3), "y");
    }

    #[test]
    fn high_threshold_yields_specials_only() {
        let v = build_vocabulary(&corpus(&["a a b"]), 10, None);
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
        assert_eq!(v.encode(&["a", "q"]), vec![UNK, UNK]);
    }
}
