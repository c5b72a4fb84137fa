use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::delex::{slot_token, value_token, EOS};
use crate::corpus::{Dialogue, Ontology};
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const DEFAULT_MIN_COUNT: usize = 2;

/// Bijective token/index map. Index 0 is padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Padding, unknown, end-of-sentence and every delexicalised token.
    pub fn specials(ontology: &Ontology) -> Vec<String> {
        let mut out = vec![PAD.to_string(), UNK.to_string(), EOS.to_string(), value_token("name")];
        for slot in ontology.all_slots() {
            out.push(value_token(&slot));
        }
        for slot in ontology.all_slots() {
            out.push(slot_token(&slot));
        }
        out
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let v = Vocabulary::from(tokens);
        if v.index.len() != v.tokens.len() {
            return Err(Error::Config("duplicate token in vocabulary".into()));
        }
        if v.tokens.first().map(String::as_str) != Some(PAD) || v.get(UNK).is_none() || v.get(EOS).is_none() {
            return Err(Error::Config("vocabulary lacks special tokens".into()));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or of the unknown token.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or_else(|| self.unk())
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk(&self) -> usize {
        self.index[UNK]
    }

    pub fn eos(&self) -> usize {
        self.index[EOS]
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Build the vocabulary from user and system tokens of a delexicalised
/// corpus. Words seen fewer than `min_count` times are left out.
pub fn build_vocab(ontology: &Ontology, corpus: &[Dialogue], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut tokens = Vocabulary::specials(ontology);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in corpus.iter().flat_map(|d| &d.turns) {
        for w in t.user.iter().chain(&t.sys) {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_count && !tokens.iter().any(|s| s == w))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
    Vocabulary::from_tokens(tokens)
}
