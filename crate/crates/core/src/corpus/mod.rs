//! Restaurant-domain ontology and database, the synthetic dialogue corpus,
//! delexicalisation, vocabulary construction and the 3:1:1 split.

mod delex;
mod generate;
mod ontology;
mod vocab;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub use delex::{
    is_delex_token, lexicalise, parse_delex_token, slot_display, slot_surface_forms, slot_token, tokenize,
    value_synonyms, value_token, Lexicon, EOS,
};
pub use generate::{generate_corpus, GeneratorConfig};
pub use ontology::{Database, Entity, InformableSlots, Ontology};
pub use vocab::{build_vocab, Vocabulary, DEFAULT_MIN_COUNT, PAD, UNK};

/// Gold tracker label of an informable slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum InformLabel {
    Value(String),
    DontCare,
    NotMentioned,
}

impl From<InformLabel> for String {
    fn from(l: InformLabel) -> String {
        match l {
            InformLabel::Value(v) => v,
            InformLabel::DontCare => "dontcare".into(),
            InformLabel::NotMentioned => "none".into(),
        }
    }
}

impl From<String> for InformLabel {
    fn from(s: String) -> Self {
        match s.as_str() {
            "dontcare" => InformLabel::DontCare,
            "none" => InformLabel::NotMentioned,
            _ => InformLabel::Value(s),
        }
    }
}

impl InformLabel {
    /// Class index: values first, then dontcare, then not-mentioned.
    pub fn class_index(&self, values: &[String]) -> Option<usize> {
        match self {
            InformLabel::Value(v) => values.iter().position(|x| x == v),
            InformLabel::DontCare => Some(values.len()),
            InformLabel::NotMentioned => Some(values.len() + 1),
        }
    }

    pub fn from_class(idx: usize, values: &[String]) -> Self {
        if idx < values.len() {
            InformLabel::Value(values[idx].clone())
        } else if idx == values.len() {
            InformLabel::DontCare
        } else {
            InformLabel::NotMentioned
        }
    }

    pub fn value(&self) -> Option<&str> {
        match self {
            InformLabel::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// Per-turn tracker labels: cumulative informable constraints and the
/// requestable slots asked for in this turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Labels {
    #[serde(flatten)]
    pub informable: BTreeMap<String, InformLabel>,
    pub requestable: BTreeMap<String, u8>,
}

impl Labels {
    pub fn empty(ontology: &Ontology) -> Self {
        Labels {
            informable: ontology
                .informable_slots()
                .map(|s| (s.to_string(), InformLabel::NotMentioned))
                .collect(),
            requestable: ontology.requestable.iter().map(|s| (s.clone(), 0)).collect(),
        }
    }

    /// Database constraints implied by the informable labels.
    pub fn constraints(&self, ontology: &Ontology) -> Vec<(String, Option<String>)> {
        ontology
            .informable_slots()
            .map(|s| {
                let v = self.informable.get(s).and_then(|l| l.value()).map(String::from);
                (s.to_string(), v)
            })
            .collect()
    }

    pub fn requested(&self) -> impl Iterator<Item = &str> {
        self.requestable.iter().filter(|(_, v)| **v == 1).map(|(k, _)| k.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    /// A value or `dontcare` per informable slot.
    pub constraints: BTreeMap<String, InformLabel>,
    pub requests: Vec<String>,
}

impl Goal {
    pub fn satisfied_by(&self, entity: &Entity) -> bool {
        self.constraints.iter().all(|(slot, c)| match c {
            InformLabel::Value(v) => entity.get(slot) == Some(v.as_str()),
            _ => true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// Delexicalised user tokens.
    pub user: Vec<String>,
    /// Surface user tokens (tracker input).
    #[serde(rename = "userSurface")]
    pub user_surface: Vec<String>,
    /// Delexicalised system response ending in [`EOS`].
    pub sys: Vec<String>,
    pub labels: Labels,
    #[serde(rename = "dbMatch")]
    pub db_match: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub goal: Goal,
    pub turns: Vec<Turn>,
}

/// One corpus file: the ontology plus a list of dialogues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub ontology: Ontology,
    pub dialogues: Vec<Dialogue>,
}

impl CorpusFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Dialogue>,
    pub valid: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

/// Dialogue-level 3:1:1 partition after a seeded shuffle.
pub fn split(corpus: &[Dialogue], rng: &mut Rng) -> Result<Splits> {
    let n = corpus.len();
    if n < 5 {
        return Err(Error::Config(format!("need at least 5 dialogues to split, got {n}")));
    }
    let held = (n as f64 / 5.0).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let take = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    Ok(Splits {
        valid: take(&order[..held]),
        test: take(&order[held..2 * held]),
        train: take(&order[2 * held..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_json_shape() {
        let o = Ontology::restaurant();
        let mut l = Labels::empty(&o);
        l.informable.insert("food".into(), InformLabel::Value("thai".into()));
        l.informable.insert("area".into(), InformLabel::DontCare);
        l.requestable.insert("phone".into(), 1);
        let json = serde_json::to_value(&l).unwrap();
        assert_eq!(json["food"], "thai");
        assert_eq!(json["area"], "dontcare");
        assert_eq!(json["pricerange"], "none");
        assert_eq!(json["requestable"]["phone"], 1);
        let back: Labels = serde_json::from_value(json).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn split_sizes() {
        let o = Ontology::restaurant();
        let db = Database::restaurant(&o, 3);
        let dialogues = generate_corpus(&o, &db, 5, &GeneratorConfig::default(), &mut Rng::new(1)).unwrap();
        let s = split(&dialogues, &mut Rng::new(2)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (3, 1, 1));
        assert!(split(&dialogues[..4], &mut Rng::new(2)).is_err());
    }
}
