//! On-disk layout of a corpus directory and run directories.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use snapdial::corpus::{CorpusFile, Database, Dialogue, Splits, Vocabulary};
use snapdial::experiment::SplitIds;
use snapdial::model::World;
use snapdial::tracker::TrackerModel;
use snapdial::training::Checkpoint;

use crate::error::{CliError, Stage};
use crate::manifest::sha256_bytes;

pub const CORPUS: &str = "corpus.json";
pub const ONTOLOGY: &str = "ontology.json";
pub const DB: &str = "db.json";
pub const SPLITS: &str = "splits.json";
pub const TRACKERS: &str = "trackers.json";
pub const VOCAB: &str = "vocab.json";

pub const CHECKPOINT: &str = "checkpoint.json";
pub const HISTORY: &str = "history.csv";
pub const DECODE: &str = "decode.jsonl";
pub const METRICS: &str = "metrics.json";
pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";

pub fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("missing input: {}", path.display())))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, CliError> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(stage, path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(stage, path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: Stage) -> Result<(), CliError> {
    let text = serde_json::to_string(value).expect("value serialises");
    write_text(path, &text, stage)
}

pub fn write_text(path: &Path, text: &str, stage: Stage) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(stage, parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(stage, path, e))
}

pub fn create_dir(dir: &Path, stage: Stage) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))
}

/// A generated corpus with its database and split.
#[derive(Debug)]
pub struct CorpusDir {
    pub dir: PathBuf,
    pub file: CorpusFile,
    pub database: Database,
    pub splits: Splits,
    pub hash: String,
}

impl CorpusDir {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let corpus_path = dir.join(CORPUS);
        require(&corpus_path)?;
        let bytes = std::fs::read(&corpus_path).map_err(|e| CliError::io(Stage::Corpus, &corpus_path, e))?;
        let file: CorpusFile =
            serde_json::from_slice(&bytes).map_err(|e| CliError::io(Stage::Corpus, &corpus_path, e))?;
        file.ontology.validate().map_err(|e| CliError::at(Stage::Corpus, e))?;
        let database: Database = read_json(&dir.join(DB), Stage::Corpus)?;
        database
            .validate(&file.ontology)
            .map_err(|e| CliError::at(Stage::Corpus, e))?;
        let ids: SplitIds = read_json(&dir.join(SPLITS), Stage::Corpus)?;
        let splits = ids.resolve(&file.dialogues).map_err(|e| CliError::at(Stage::Corpus, e))?;
        Ok(CorpusDir {
            dir: dir.to_path_buf(),
            file,
            database,
            splits,
            hash: sha256_bytes(&bytes),
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Dialogue], CliError> {
        match name {
            "train" => Ok(&self.splits.train),
            "valid" => Ok(&self.splits.valid),
            "test" => Ok(&self.splits.test),
            _ => Err(CliError::usage(format!("unknown split {name:?} (expected train, valid or test)"))),
        }
    }

    /// The frozen stage-1 outputs; requires `train-trackers` to have run.
    pub fn world(&self) -> Result<(World, Vocabulary), CliError> {
        let trackers_path = self.dir.join(TRACKERS);
        if !trackers_path.exists() {
            return Err(CliError::usage(format!(
                "missing input: {} (run train-trackers first)",
                trackers_path.display()
            )));
        }
        let trackers: TrackerModel = read_json(&trackers_path, Stage::Trackers)?;
        trackers
            .validate(&self.file.ontology)
            .map_err(|e| CliError::at(Stage::Trackers, e))?;
        let vocab: Vocabulary = read_json(&self.dir.join(VOCAB), Stage::Trackers)?;
        let world = World {
            ontology: self.file.ontology.clone(),
            database: self.database.clone(),
            trackers,
        };
        Ok((world, vocab))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    read_json(path, Stage::Decode)
}
