//! Beam search over the output distribution and the end-to-end response
//! pipeline.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_delex_token, lexicalise, value_token, Dialogue, Goal, Lexicon, tokenize};
use crate::error::Result;
use crate::model::{DecodeState, Model, TurnContext, TurnInput, World};
use crate::numerics::Rng;
use crate::tracker::BeliefState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BeamConfig {
    pub width: usize,
    pub candidates: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 10,
            candidates: 5,
            max_len: 30,
        }
    }
}

/// A finished (or, when nothing finished, truncated) hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tokens: Vec<usize>,
    pub sum_log_prob: f64,
    pub truncated: bool,
}

impl Candidate {
    /// Average log-probability per emitted token.
    pub fn score(&self) -> f64 {
        self.sum_log_prob / self.tokens.len().max(1) as f64
    }
}

struct Hyp {
    tokens: Vec<usize>,
    sum: f64,
    state: DecodeState,
}

fn by_sum(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Beam search from the turn's conditioning. Expansions are pruned to
/// `width` by summed log-probability; hypotheses ending in end-of-sentence
/// join the candidate pool, which is ranked by average log-probability.
pub fn beam_search(model: &Model, ctx: &TurnContext, cfg: &BeamConfig) -> Vec<Candidate> {
    let eos = model.eos();
    let width = cfg.width.max(1);
    let mut beams = vec![Hyp {
        tokens: Vec::new(),
        sum: 0.0,
        state: model.start_state(),
    }];
    let mut pool: Vec<Candidate> = Vec::new();
    for _ in 0..cfg.max_len {
        let records: Vec<_> = beams.iter().map(|h| model.advance(ctx, &h.state)).collect();
        let mut expansions: Vec<(f64, usize, usize)> = Vec::with_capacity(beams.len() * records[0].dist.len());
        for (bi, (h, rec)) in beams.iter().zip(&records).enumerate() {
            for (tok, &p) in rec.dist.iter().enumerate() {
                if p > 0.0 {
                    expansions.push((h.sum + p.ln(), bi, tok));
                }
            }
        }
        if expansions.len() > width {
            expansions.select_nth_unstable_by(width - 1, by_sum);
            expansions.truncate(width);
        }
        expansions.sort_by(by_sum);
        let mut next = Vec::with_capacity(width);
        for (sum, bi, tok) in expansions {
            let mut tokens = beams[bi].tokens.clone();
            tokens.push(tok);
            if tok == eos {
                if !pool.iter().any(|c| c.tokens == tokens) {
                    pool.push(Candidate {
                        tokens,
                        sum_log_prob: sum,
                        truncated: false,
                    });
                }
            } else {
                let cell = &records[bi].cell;
                next.push(Hyp {
                    tokens,
                    sum,
                    state: DecodeState {
                        h: cell.h.clone(),
                        c: cell.c.clone(),
                        prev: tok,
                    },
                });
            }
        }
        beams = next;
        if pool.len() >= cfg.candidates || beams.is_empty() {
            break;
        }
    }
    if pool.is_empty() {
        pool = beams
            .into_iter()
            .map(|h| Candidate {
                tokens: h.tokens,
                sum_log_prob: h.sum,
                truncated: true,
            })
            .collect();
        pool.sort_by(|a, b| b.score().total_cmp(&a.score()));
        pool.truncate(1);
        return pool;
    }
    pool.sort_by(|a, b| b.score().total_cmp(&a.score()));
    pool.truncate(cfg.candidates.max(1));
    pool
}

/// Token-by-token argmax until end-of-sentence or `max_len`.
pub fn greedy(model: &Model, ctx: &TurnContext, max_len: usize) -> Candidate {
    let eos = model.eos();
    let mut state = model.start_state();
    let mut tokens = Vec::new();
    let mut sum = 0.0;
    for _ in 0..max_len {
        let rec = model.advance(ctx, &state);
        let mut best = 0;
        for (i, &p) in rec.dist.iter().enumerate() {
            if p > rec.dist[best] {
                best = i;
            }
        }
        sum += rec.dist[best].ln();
        tokens.push(best);
        if best == eos {
            return Candidate {
                tokens,
                sum_log_prob: sum,
                truncated: false,
            };
        }
        state = DecodeState {
            h: rec.cell.h,
            c: rec.cell.c,
            prev: best,
        };
    }
    Candidate {
        tokens,
        sum_log_prob: sum,
        truncated: true,
    }
}

/// Teacher-forced average log-probability of a token sequence.
pub fn sequence_score(model: &Model, ctx: &TurnContext, tokens: &[usize]) -> f64 {
    let mut state = model.start_state();
    let mut sum = 0.0;
    for &t in tokens {
        let rec = model.advance(ctx, &state);
        sum += rec.dist[t].ln();
        state = DecodeState {
            h: rec.cell.h,
            c: rec.cell.c,
            prev: t,
        };
    }
    sum / tokens.len().max(1) as f64
}

/// Substitute values into a skeletal sentence. Tokens with no available
/// value are kept and wrapped in asterisks; their ids are returned too.
pub fn lexicalise_marked(
    skeletal: &[String],
    entity: Option<&crate::corpus::Entity>,
    belief: &std::collections::BTreeMap<String, String>,
) -> (String, Vec<String>) {
    if let Ok(s) = lexicalise(skeletal, entity, belief) {
        return (s, Vec::new());
    }
    let mut missing = Vec::new();
    let words: Vec<String> = skeletal
        .iter()
        .filter(|t| t.as_str() != crate::corpus::EOS)
        .map(|t| match lexicalise(std::slice::from_ref(t), entity, belief) {
            Ok(w) => w,
            Err(_) => {
                missing.push(t.clone());
                format!("*{t}*")
            }
        })
        .collect();
    (words.join(" "), missing)
}

/// One generated system turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub candidates: Vec<Candidate>,
    pub skeletal: Vec<String>,
    pub surface: String,
    pub missing: Vec<String>,
    /// Pointer entity, reported only when the response names a venue.
    pub offered_entity: Option<String>,
}

/// Decode a prepared turn and lexicalise the top candidate.
pub fn respond_to(model: &Model, world: &World, input: &TurnInput, beam: &BeamConfig) -> Result<Response> {
    let ctx = model.context(input)?;
    let candidates = beam_search(model, &ctx, beam);
    let skeletal: Vec<String> = candidates[0].tokens.iter().map(|&t| model.vocab.token(t).to_string()).collect();
    let entity = input.pointer.as_deref().and_then(|p| world.database.by_name(p));
    let (surface, missing) = lexicalise_marked(&skeletal, entity, &input.belief.top_values(&world.ontology));
    let names_venue = skeletal.iter().any(|t| *t == value_token("name"));
    Ok(Response {
        candidates,
        skeletal,
        surface,
        missing,
        offered_entity: if names_venue { input.pointer.clone() } else { None },
    })
}

/// Running state of a live conversation.
#[derive(Debug, Clone)]
pub struct Conversation {
    pub belief: BeliefState,
    pub prev_sys: Vec<String>,
    pub pointer: Option<String>,
    pub rng: Rng,
}

impl Conversation {
    pub fn new(world: &World, seed: u64) -> Self {
        Conversation {
            belief: BeliefState::initial(&world.ontology),
            prev_sys: Vec::new(),
            pointer: None,
            rng: Rng::new(seed),
        }
    }
}

/// Everything produced for one live user utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveTurn {
    pub input: TurnInput,
    pub delex: Vec<String>,
    pub response: Response,
}

/// Full pipeline for free text: delexicalise, track, query, decode,
/// lexicalise. Updates the conversation state.
pub fn respond(
    model: &Model,
    world: &World,
    lexicon: &Lexicon,
    conv: &mut Conversation,
    text: &str,
    beam: &BeamConfig,
) -> Result<LiveTurn> {
    let surface = tokenize(text);
    let delex = lexicon.delexicalise(&surface);
    let input = world.live_turn(
        model,
        &conv.belief,
        &conv.prev_sys,
        &surface,
        &delex,
        conv.pointer.as_deref(),
        &mut conv.rng,
    );
    let response = respond_to(model, world, &input, beam)?;
    conv.belief = input.belief.clone();
    conv.prev_sys = response.skeletal.clone();
    conv.pointer = input.pointer.clone();
    Ok(LiveTurn { input, delex, response })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTokens {
    pub tokens: Vec<String>,
    pub score: f64,
}

/// One line of a decode dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecodeRecord {
    pub dialogue_id: String,
    pub turn: usize,
    pub candidates: Vec<ScoredTokens>,
    pub chosen: Vec<String>,
    pub surface: String,
    pub offered_entity: Option<String>,
    pub reference: Vec<String>,
    pub goal: Goal,
}

/// Decode every turn of each dialogue from its gold prefix.
pub fn decode_dialogues(
    model: &Model,
    world: &World,
    dialogues: &[Dialogue],
    beam: &BeamConfig,
    seed: u64,
) -> Result<Vec<DecodeRecord>> {
    let mut rng = Rng::substream(seed, 0xdec);
    let mut out = Vec::new();
    for d in dialogues {
        let inputs = world.prepare(model, d, &mut rng);
        for (t, (input, turn)) in inputs.iter().zip(&d.turns).enumerate() {
            let r = respond_to(model, world, input, beam)?;
            out.push(DecodeRecord {
                dialogue_id: d.id.clone(),
                turn: t,
                candidates: r
                    .candidates
                    .iter()
                    .map(|c| ScoredTokens {
                        tokens: c.tokens.iter().map(|&i| model.vocab.token(i).to_string()).collect(),
                        score: c.score(),
                    })
                    .collect(),
                chosen: r.skeletal,
                surface: r.surface,
                offered_entity: r.offered_entity,
                reference: turn.sys.clone(),
                goal: d.goal.clone(),
            });
        }
    }
    Ok(out)
}

pub fn to_jsonl(records: &[DecodeRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serialises"));
        s.push('\n');
    }
    s
}

pub fn from_jsonl(text: &str) -> Result<Vec<DecodeRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Delexicalised tokens of a sentence, for metrics.
pub fn delex_tokens(tokens: &[String]) -> impl Iterator<Item = &String> {
    tokens.iter().filter(|t| is_delex_token(t))
}
