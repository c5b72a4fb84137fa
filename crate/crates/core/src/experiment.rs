//! Desk-scale experiment plumbing: corpus setup, the results-table grid and
//! multi-seed train/decode/evaluate runs.

use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocab, generate_corpus, split, Database, Dialogue, GeneratorConfig, Ontology, Splits, Vocabulary, DEFAULT_MIN_COUNT};
use crate::decoder::Variant;
use crate::decoding::{decode_dialogues, BeamConfig, DecodeRecord};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_records, MetricReport, SeedMetrics, TopKMode};
use crate::model::{Model, World};
use crate::numerics::Rng;
use crate::tracker::{train_trackers, BeliefRepr, TrackerHyper};
use crate::training::{train, TrainConfig, TrainHistory};

/// Dialogue ids of each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl SplitIds {
    pub fn of(splits: &Splits) -> Self {
        let ids = |d: &[Dialogue]| d.iter().map(|d| d.id.clone()).collect();
        SplitIds {
            train: ids(&splits.train),
            valid: ids(&splits.valid),
            test: ids(&splits.test),
        }
    }

    pub fn resolve(&self, dialogues: &[Dialogue]) -> Result<Splits> {
        let pick = |ids: &[String]| -> Result<Vec<Dialogue>> {
            ids.iter()
                .map(|id| {
                    dialogues
                        .iter()
                        .find(|d| &d.id == id)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("split names unknown dialogue {id}")))
                })
                .collect()
        };
        Ok(Splits {
            train: pick(&self.train)?,
            valid: pick(&self.valid)?,
            test: pick(&self.test)?,
        })
    }
}

/// Everything a generator run needs besides its own config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub world: World,
    pub dialogues: Vec<Dialogue>,
    pub splits: Splits,
    pub vocab: Vocabulary,
}

/// Generate a corpus of `n` dialogues with its venue table.
pub fn synthetic_corpus(n: usize, seed: u64) -> Result<(Ontology, Database, Vec<Dialogue>)> {
    let ontology = Ontology::restaurant();
    let database = Database::restaurant(&ontology, seed);
    let dialogues = generate_corpus(&ontology, &database, n, &GeneratorConfig::default(), &mut Rng::new(seed))?;
    Ok((ontology, database, dialogues))
}

const SPLIT_STREAM: u64 = 0x5911;

pub fn split_corpus(dialogues: &[Dialogue], seed: u64) -> Result<Splits> {
    split(dialogues, &mut Rng::substream(seed, SPLIT_STREAM))
}

impl Setup {
    /// Corpus generation, 3:1:1 split, stage-1 tracker training and the
    /// vocabulary, all from one seed.
    pub fn synthetic(n: usize, seed: u64) -> Result<Setup> {
        let (ontology, database, dialogues) = synthetic_corpus(n, seed)?;
        let splits = split_corpus(&dialogues, seed)?;
        let hyper = TrackerHyper {
            seed,
            ..TrackerHyper::default()
        };
        let trackers = train_trackers(&ontology, &splits.train, &splits.valid, &hyper)?;
        let vocab = build_vocab(&ontology, &splits.train, DEFAULT_MIN_COUNT)?;
        Ok(Setup {
            world: World {
                ontology,
                database,
                trackers,
            },
            dialogues,
            splits,
            vocab,
        })
    }
}

/// One row of the results table: architecture, attention and belief
/// representation. Each row is run with and without snapshot learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRow {
    pub variant: Variant,
    pub attention: bool,
    pub belief: BeliefRepr,
}

/// The eight configurations of the results table, in table order.
pub fn grid_rows() -> Vec<GridRow> {
    use BeliefRepr::{Full, Summary};
    use Variant::{Hybrid, Lm, Mem};
    [
        (Lm, false, Full),
        (Lm, false, Summary),
        (Mem, false, Summary),
        (Hybrid, false, Summary),
        (Hybrid, false, Full),
        (Lm, true, Summary),
        (Mem, true, Summary),
        (Hybrid, true, Summary),
    ]
    .into_iter()
    .map(|(variant, attention, belief)| GridRow {
        variant,
        attention,
        belief,
    })
    .collect()
}

impl GridRow {
    pub fn config(&self, base: &TrainConfig, snapshot: bool) -> TrainConfig {
        TrainConfig {
            variant: self.variant,
            attention: self.attention,
            belief: self.belief,
            snapshot,
            ..base.clone()
        }
    }
}

/// Result of one seed: training history, decode dump and metrics.
#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: Result<SeedRun>,
}

#[derive(Debug)]
pub struct SeedRun {
    pub model: Model,
    pub history: TrainHistory,
    pub records: Vec<DecodeRecord>,
    pub metrics: SeedMetrics,
}

/// Train, decode the test split and score one seed.
pub fn run_seed(setup: &Setup, config: &TrainConfig, beam: &BeamConfig) -> Result<SeedRun> {
    let (model, history) = train(config, &setup.world, &setup.vocab, &setup.splits.train, &setup.splits.valid, None)?;
    let records = decode_dialogues(&model, &setup.world, &setup.splits.test, beam, config.seed)?;
    let metrics = evaluate_records(config.seed, &records, &setup.world.database, TopKMode::Best);
    Ok(SeedRun {
        model,
        history,
        records,
        metrics,
    })
}

/// Seeds `config.seed .. config.seed + n`, then the aggregated report.
pub fn run_config(setup: &Setup, config: &TrainConfig, n: usize, beam: &BeamConfig) -> (MetricReport, Vec<SeedOutcome>) {
    let outcomes: Vec<SeedOutcome> = (0..n as u64)
        .map(|k| {
            let seed = config.seed + k;
            let cfg = TrainConfig { seed, ..config.clone() };
            SeedOutcome {
                seed,
                result: run_seed(setup, &cfg, beam),
            }
        })
        .collect();
    let report = report_for(config, &outcomes);
    (report, outcomes)
}

pub fn report_for(config: &TrainConfig, outcomes: &[SeedOutcome]) -> MetricReport {
    let per_seed = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|r| r.metrics.clone()))
        .collect();
    let incomplete = outcomes.iter().filter(|o| o.result.is_err()).map(|o| o.seed).collect();
    MetricReport::aggregate(&config.arch_label(), config.belief, config.snapshot, per_seed, incomplete)
}

/// Metrics of the freshly initialised model for `config`.
pub fn untrained_metrics(setup: &Setup, config: &TrainConfig, beam: &BeamConfig) -> Result<SeedMetrics> {
    let model = Model::init(config, setup.vocab.clone(), &setup.world.ontology)?;
    let records = decode_dialogues(&model, &setup.world, &setup.splits.test, beam, config.seed)?;
    Ok(evaluate_records(config.seed, &records, &setup.world.database, TopKMode::Best))
}
