//! Token vocabulary with reserved PAD/UNK ids.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Maps every token with frequency >= `min_count`; ordering is
    /// frequency descending, ties lexicographic.
    pub fn build<S: AsRef<str>>(documents: &[Vec<S>], min_count: u64) -> Result<Self, CorpusError> {
        if documents.iter().all(|d| d.is_empty()) {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for doc in documents {
            for tok in doc {
                *freq.entry(tok.as_ref()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut counts = vec![0u64, 0u64];
        for (tok, c) in kept {
            tokens.push(tok.to_string());
            counts.push(c);
        }
        let mut vocab = Self {
            tokens,
            index: HashMap::new(),
            counts,
        };
        vocab.rebuild_index();
        Ok(vocab)
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and UNK are always present
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path)?;
        let mut vocab: Self = serde_json::from_str(&json)?;
        vocab.rebuild_index();
        Ok(vocab)
    }

    /// Restores the token index after deserialization, which skips it.
    pub fn rebuild(&mut self) {
        self.rebuild_index();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn ordering_and_reserved_ids() {
        let vocab = Vocabulary::build(&[doc("a a b")], 1).unwrap();
        assert_eq!(vocab.id("<pad>"), PAD_ID);
        assert_eq!(vocab.id("<unk>"), UNK_ID);
        assert_eq!(vocab.id("a"), 2);
        assert_eq!(vocab.id("b"), 3);
    }

    #[test]
    fn min_count_folds_to_unk() {
        let vocab = Vocabulary::build(&[doc("a a b")], 2).unwrap();
        assert_eq!(vocab.id("a"), 2);
        assert_eq!(vocab.id("b"), UNK_ID);
        assert_eq!(vocab.len(), 3);
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(Vocabulary::build(&empty, 1).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let vocab = Vocabulary::build(&[doc("x y y z z z")], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab, loaded);
        assert_eq!(loaded.id("z"), vocab.id("z"));
    }
}
