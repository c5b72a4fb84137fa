use std::collections::{BTreeMap, HashMap};

use crate::corpus::{Database, Entity, Ontology};
use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";

/// Lowercase, split on whitespace and drop punctuation other than
/// in-word apostrophes.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '\'' || c == '[' || c == ']' || c == '.' || c == '<' || c == '>' {
                c
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .map(|t| {
            // Keep delexicalised tokens intact, strip sentence dots elsewhere.
            if t.starts_with('[') || t.starts_with('<') {
                t.to_string()
            } else {
                t.trim_matches('.').trim_matches('\'').to_string()
            }
        })
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn value_token(slot: &str) -> String {
    format!("[v.{slot}]")
}

pub fn slot_token(slot: &str) -> String {
    format!("[s.{slot}]")
}

/// `Some((kind, slot))` for `[v.slot]` / `[s.slot]` tokens.
pub fn parse_delex_token(tok: &str) -> Option<(char, &str)> {
    let inner = tok.strip_prefix('[')?.strip_suffix(']')?;
    let (kind, slot) = inner.split_once('.')?;
    match kind {
        "v" => Some(('v', slot)),
        "s" => Some(('s', slot)),
        _ => None,
    }
}

pub fn is_delex_token(tok: &str) -> bool {
    parse_delex_token(tok).is_some()
}

/// Surface forms naming each slot.
pub fn slot_surface_forms(slot: &str) -> &'static [&'static str] {
    match slot {
        "food" => &["type of food", "kind of food", "food type", "cuisine"],
        "pricerange" => &["price range", "price"],
        "area" => &["part of town", "area"],
        "address" => &["address"],
        "phone" => &["phone number", "phone"],
        "postcode" => &["postcode", "post code", "postal code"],
        _ => &[],
    }
}

/// Canonical display name used when lexicalising `[s.slot]`.
pub fn slot_display(slot: &str) -> &str {
    slot_surface_forms(slot).first().copied().unwrap_or(slot)
}

/// Informal synonyms mapped to canonical ontology values.
pub fn value_synonyms(value: &str) -> &'static [&'static str] {
    match value {
        "centre" => &["center", "city centre", "town centre"],
        "cheap" => &["inexpensive", "budget"],
        "expensive" => &["pricey", "upmarket"],
        "moderate" => &["moderately priced", "mid priced"],
        _ => &[],
    }
}

#[derive(Debug, Clone)]
struct Phrase {
    tokens: Vec<String>,
    replacement: String,
}

/// Phrase table for longest-match delexicalisation.
#[derive(Debug, Clone)]
pub struct Lexicon {
    by_first: HashMap<String, Vec<Phrase>>,
    max_len: usize,
}

impl Lexicon {
    pub fn new(ontology: &Ontology, database: &Database) -> Self {
        let mut entries: Vec<(String, String)> = Vec::new();
        for e in &database.entities {
            entries.push((e.name.clone(), value_token("name")));
            for slot in ["address", "phone", "postcode"] {
                if let Some(v) = e.get(slot) {
                    entries.push((v.to_string(), value_token(slot)));
                }
            }
        }
        for (slot, values) in &ontology.informable.0 {
            for v in values {
                entries.push((v.clone(), value_token(slot)));
                for syn in value_synonyms(v) {
                    entries.push((syn.to_string(), value_token(slot)));
                }
            }
        }
        for slot in ontology.all_slots() {
            for form in slot_surface_forms(&slot) {
                entries.push((form.to_string(), slot_token(&slot)));
            }
        }

        let mut by_first: HashMap<String, Vec<Phrase>> = HashMap::new();
        let mut max_len = 0;
        for (surface, replacement) in entries {
            let tokens = tokenize(&surface);
            if tokens.is_empty() {
                continue;
            }
            max_len = max_len.max(tokens.len());
            let bucket = by_first.entry(tokens[0].clone()).or_default();
            if bucket.iter().any(|p| p.tokens == tokens) {
                continue;
            }
            bucket.push(Phrase { tokens, replacement });
        }
        for bucket in by_first.values_mut() {
            // Longest first; stable sort keeps insertion priority among equals.
            bucket.sort_by_key(|b| std::cmp::Reverse(b.tokens.len()));
        }
        Lexicon { by_first, max_len }
    }

    /// All `(phrase, replacement)` pairs, for oracles and inspection.
    pub fn phrases(&self) -> Vec<(Vec<String>, String)> {
        let mut out: Vec<_> = self
            .by_first
            .values()
            .flatten()
            .map(|p| (p.tokens.clone(), p.replacement.clone()))
            .collect();
        out.sort();
        out
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_len
    }

    /// Replace slot values and slot names by generic tokens, scanning left
    /// to right and taking the longest phrase at each position.
    pub fn delexicalise<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        let mut out = Vec::with_capacity(lower.len());
        let mut i = 0;
        while i < lower.len() {
            let hit = self.by_first.get(&lower[i]).and_then(|bucket| {
                bucket.iter().find(|p| {
                    i + p.tokens.len() <= lower.len() && lower[i..i + p.tokens.len()] == p.tokens[..]
                })
            });
            match hit {
                Some(p) => {
                    out.push(p.replacement.clone());
                    i += p.tokens.len();
                }
                None => {
                    out.push(lower[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

/// Substitute entity values (or, for informable slots without an entity, the
/// tracker's top values) into a skeletal sentence.
pub fn lexicalise<S: AsRef<str>>(
    skeletal: &[S],
    entity: Option<&Entity>,
    belief_values: &BTreeMap<String, String>,
) -> Result<String> {
    let mut words: Vec<String> = Vec::with_capacity(skeletal.len());
    for tok in skeletal {
        let tok = tok.as_ref();
        if tok == EOS {
            continue;
        }
        match parse_delex_token(tok) {
            Some(('v', slot)) => {
                let value = entity
                    .and_then(|e| e.get(slot))
                    .or_else(|| belief_values.get(slot).map(String::as_str))
                    .ok_or_else(|| Error::Lexicalise { token: tok.to_string() })?;
                words.push(value.to_string());
            }
            Some((_, slot)) => words.push(slot_display(slot).to_string()),
            None => words.push(tok.to_string()),
        }
    }
    Ok(words.join(" "))
}
