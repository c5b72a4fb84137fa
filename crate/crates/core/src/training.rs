//! Generator training with per-dialogue SGD batches, early stopping on
//! validation log-likelihood, checkpoints and multi-seed runs.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Database, Dialogue, Ontology, Vocabulary};
use crate::decoder::Variant;
use crate::error::{Error, Result};
use crate::model::{Model, TurnInput, TurnLoss, World};
use crate::numerics::{clip_and_step, ClipMode, ParamSet, Parameter, Rng, SgdStep};
use crate::snapshot::IndicatorSpec;
use crate::tracker::{BeliefRepr, TrackerModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub attention: bool,
    pub belief: BeliefRepr,
    pub snapshot: bool,
    pub lambda: f64,
    pub lr: f64,
    pub l2: f64,
    pub clip_norm: f64,
    pub clip_mode: ClipMode,
    pub hidden: usize,
    pub init_range: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Lm,
            attention: false,
            belief: BeliefRepr::Summary,
            snapshot: false,
            lambda: 1.0,
            lr: 0.05,
            l2: 1e-5,
            clip_norm: 1.0,
            clip_mode: ClipMode::Norm,
            hidden: 50,
            init_range: 0.3,
            patience: 5,
            max_epochs: 100,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(self.init_range > 0.0) {
            return bad("initRange must be positive");
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and maxEpochs must be positive");
        }
        Ok(())
    }

    /// Architecture label as used in the results table, e.g. `hybrid+att`.
    pub fn arch_label(&self) -> String {
        if self.attention {
            format!("{}+att", self.variant)
        } else {
            self.variant.to_string()
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serialises")))
    }

    /// Hash of every field except the seed; names the run family directory.
    pub fn family_hash(&self) -> String {
        TrainConfig { seed: 0, ..self.clone() }.hash()
    }

    fn sgd(&self) -> SgdStep {
        SgdStep {
            lr: self.lr,
            l2: self.l2,
            clip: self.clip_norm,
            clip_mode: self.clip_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub token_loss: f64,
    pub snapshot_loss: f64,
    #[serde(rename = "validLL")]
    pub valid_ll: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn best_valid_ll(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(f64::NEG_INFINITY, |e| e.valid_ll)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,trainLoss,tokenLoss,snapshotLoss,validLL,seconds\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                e.epoch, e.train_loss, e.token_loss, e.snapshot_loss, e.valid_ll, e.seconds
            ));
        }
        s
    }
}

/// Observer for per-epoch progress.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochRecord);

/// Prepared tracker inputs for a list of dialogues.
pub fn prepare_all(world: &World, model: &Model, dialogues: &[Dialogue], seed: u64) -> Vec<Vec<TurnInput>> {
    let mut rng = Rng::substream(seed, 0x9e);
    dialogues.iter().map(|d| world.prepare(model, d, &mut rng)).collect()
}

/// One SGD step on a dialogue. Returns its loss components.
pub fn train_dialogue(model: &mut Model, turns: &[TurnInput]) -> Result<TurnLoss> {
    let mut loss = TurnLoss::default();
    for t in turns {
        loss.add(model.turn_loss(t)?);
    }
    let step = model.config.sgd();
    clip_and_step(&mut model.params_mut(), &step)?;
    Ok(loss)
}

/// Train all generator parameters with the trackers frozen. Returns the
/// parameters from the epoch with the best validation log-likelihood.
pub fn train(
    config: &TrainConfig,
    world: &World,
    vocab: &Vocabulary,
    train_set: &[Dialogue],
    valid_set: &[Dialogue],
    mut hook: Option<EpochHook<'_>>,
) -> Result<(Model, TrainHistory)> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let started = Instant::now();
    let mut model = Model::init(config, vocab.clone(), &world.ontology)?;
    let train_inputs = prepare_all(world, &model, train_set, config.seed);
    let valid_inputs: Vec<TurnInput> = prepare_all(world, &model, valid_set, config.seed)
        .into_iter()
        .flatten()
        .collect();
    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    let mut shuffle = Rng::substream(config.seed, 0x5f);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut epochs = Vec::new();
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let t0 = Instant::now();
        shuffle.shuffle(&mut order);
        let mut total = TurnLoss::default();
        for &i in &order {
            let loss = train_dialogue(&mut model, &train_inputs[i]).map_err(|e| {
                Error::Training(format!("epoch {epoch}, dialogue {}: {e}", train_set[i].id))
            })?;
            total.add(loss);
        }
        let valid_ll = model.log_likelihood(&valid_inputs)?;
        let record = EpochRecord {
            epoch,
            train_loss: total.total(config),
            token_loss: total.token,
            snapshot_loss: total.snapshot,
            valid_ll,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if let Some(h) = hook.as_mut() {
            h(&record);
        }
        epochs.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| valid_ll > *b) {
            best = Some((valid_ll, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    let history = TrainHistory {
        stop_epoch: epochs.len(),
        best_epoch,
        epochs,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((best_model, history))
}

/// Outcome of one seed of a multi-seed run.
#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub result: Result<(Model, TrainHistory)>,
}

/// Train seeds `config.seed .. config.seed + n` independently.
pub fn run_seeds(
    config: &TrainConfig,
    world: &World,
    vocab: &Vocabulary,
    train_set: &[Dialogue],
    valid_set: &[Dialogue],
    n: usize,
) -> Vec<SeedRun> {
    let one = |seed: u64| {
        let cfg = TrainConfig { seed, ..config.clone() };
        SeedRun {
            seed,
            result: train(&cfg, world, vocab, train_set, valid_set, None),
        }
    };
    let seeds: Vec<u64> = (0..n as u64).map(|k| config.seed + k).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.into_iter().map(one).collect()
    }
}

/// Self-contained model file: generator weights plus the frozen trackers,
/// ontology and database they were trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub vocab_hash: String,
    pub vocab: Vocabulary,
    pub indicator_spec: IndicatorSpec,
    pub tensors: Vec<Parameter>,
    pub trackers: TrackerModel,
    pub ontology: Ontology,
    pub database: Database,
}

impl Checkpoint {
    pub fn new(model: &Model, world: &World) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            vocab_hash: model.vocab.hash(),
            vocab: model.vocab.clone(),
            indicator_spec: model.spec.clone(),
            tensors: model.params().into_iter().cloned().collect(),
            trackers: world.trackers.clone(),
            ontology: world.ontology.clone(),
            database: world.database.clone(),
        }
    }

    /// Rebuild the model and its world, checking every tensor name and shape.
    pub fn restore(&self) -> Result<(Model, World)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.vocab.hash() != self.vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        self.ontology.validate()?;
        self.database.validate(&self.ontology)?;
        self.trackers.validate(&self.ontology)?;
        let mut model = Model::init(&self.config, self.vocab.clone(), &self.ontology)?;
        if model.spec != self.indicator_spec {
            return Err(Error::Checkpoint("indicator spec does not match the ontology".into()));
        }
        let mut params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for (p, saved) in params.iter_mut().zip(&self.tensors) {
            if p.name != saved.name || p.value.shape() != saved.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not fit {} {:?}",
                    saved.name,
                    saved.value.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            saved.value.check_finite(&saved.name)?;
            p.value = saved.value.clone();
        }
        let world = World {
            ontology: self.ontology.clone(),
            database: self.database.clone(),
            trackers: self.trackers.clone(),
        };
        Ok((model, world))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
