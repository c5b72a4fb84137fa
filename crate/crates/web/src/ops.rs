use serde::Serialize;

use snapdial::analysis::{heatmap_from, trace_from, DecodedTurn, HeatMap, NeuronTrace};
use snapdial::corpus::{generate_corpus, Database, GeneratorConfig, Goal, Lexicon, Ontology};
use snapdial::decoding::{delex_tokens, respond, BeamConfig, Conversation};
use snapdial::evaluation::{bleu, ngram_matches, slot_match};
use snapdial::model::{Model, World};
use snapdial::numerics::Rng;
use snapdial::snapshot::{label_snapshots, IndicatorSpec};
use snapdial::training::Checkpoint;
use snapdial::Result;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleTurn {
    pub user: String,
    pub system: Vec<String>,
    /// One row per system token, one column per indicator.
    pub targets: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleDialogue {
    pub id: String,
    pub goal: Goal,
    pub indicators: Vec<String>,
    pub turns: Vec<SampleTurn>,
}

/// One generated dialogue with its per-step snapshot targets.
pub fn sample_dialogue(seed: u64) -> Result<SampleDialogue> {
    let ontology = Ontology::restaurant();
    let database = Database::restaurant(&ontology, seed);
    let d = generate_corpus(&ontology, &database, 1, &GeneratorConfig::default(), &mut Rng::new(seed))?.remove(0);
    let spec = IndicatorSpec::for_ontology(&ontology);
    let targets = label_snapshots(&d, &spec, true);
    let turns = d
        .turns
        .iter()
        .zip(targets)
        .map(|(t, rows)| SampleTurn {
            user: t.user_surface.join(" "),
            system: t.sys.clone(),
            targets: rows.iter().map(|r| r.iter().map(|&v| v as u8).collect()).collect(),
        })
        .collect();
    Ok(SampleDialogue {
        id: d.id.clone(),
        goal: d.goal.clone(),
        indicators: spec.0,
        turns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Score {
    pub bleu: f64,
    /// Clipped matches and totals for n = 1..4.
    pub ngrams: Vec<(usize, usize)>,
    pub slot_match: Option<f64>,
    pub candidate_slots: Vec<String>,
}

pub fn score_response(candidate: &str, reference: &str) -> Score {
    let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let (c, r) = (split(candidate), split(reference));
    Score {
        bleu: bleu(&c, &r, 4),
        ngrams: (1..=4).map(|n| ngram_matches(&c, &r, n)).collect(),
        slot_match: slot_match(&c, &r),
        candidate_slots: delex_tokens(&c).cloned().collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelSummary {
    pub arch: String,
    pub belief: String,
    pub snapshot: bool,
    pub hidden: usize,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Reply {
    pub surface: String,
    pub skeletal: Vec<String>,
    pub beliefs: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heat_map: Option<HeatMap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<NeuronTrace>,
}

/// A restored checkpoint and one running conversation.
pub struct Chat {
    model: Model,
    world: World,
    lexicon: Lexicon,
    conversation: Conversation,
    beam: BeamConfig,
}

impl Chat {
    pub fn from_json(json: &str, seed: u64) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)?;
        let (model, world) = ckpt.restore()?;
        let lexicon = Lexicon::new(&world.ontology, &world.database);
        let conversation = Conversation::new(&world, seed);
        Ok(Chat {
            model,
            world,
            lexicon,
            conversation,
            beam: BeamConfig::default(),
        })
    }

    pub fn describe(&self) -> ModelSummary {
        let c = &self.model.config;
        ModelSummary {
            arch: c.arch_label(),
            belief: c.belief.to_string(),
            snapshot: c.snapshot,
            hidden: c.hidden,
            vocab_size: self.model.vocab.len(),
        }
    }

    pub fn say(&mut self, text: &str) -> Result<Reply> {
        let model = &self.model;
        let turn = respond(model, &self.world, &self.lexicon, &mut self.conversation, text, &self.beam)?;
        let tokens = turn.response.candidates[0].tokens.clone();
        let context = model.context(&turn.input)?;
        let steps = model.replay(&context, &tokens);
        let decoded = DecodedTurn { context, tokens, steps };
        let heat_map = model.config.attention.then(|| heatmap_from(model, &decoded)).transpose()?;
        let trace = model.config.snapshot.then(|| trace_from(model, &decoded)).transpose()?;
        Ok(Reply {
            surface: turn.response.surface,
            skeletal: turn.response.skeletal,
            beliefs: turn.input.belief.top_values(&self.world.ontology).into_iter().collect(),
            heat_map,
            trace,
        })
    }
}
