//! Independent re-implementations shared by the integration tests and the
//! acceptance run.

use std::collections::HashSet;

use snapdial::corpus::{value_token, Database, Dialogue, InformLabel};
use snapdial::decoding::{DecodeRecord, ScoredTokens};
use snapdial::model::{DecodeState, Model, TurnInput};
use snapdial::numerics::Rng;
use snapdial::snapshot::{IndicatorSpec, OFFERED};

/// Candidate, reference and sentence BLEU-4 computed by hand.
pub const BLEU_CASES: &[(&str, &str, f64)] = &[
    ("a b c d", "a b c d", 1.0),
    ("a b c d e f", "a b c d e f", 1.0),
    ("a b c d", "a b c d e f", 0.6065306597126334),
    ("a b c d e f", "a b c d", 0.6042750794713536),
    ("x y z", "a b c", 0.0),
    ("a", "a", 1.0),
    ("a", "a b c", 0.1353352832366127),
    ("the the the the", "the cat is on the mat", 0.2304318198457308),
    ("the cat the cat", "the cat is on the mat", 0.30326532985631666),
    ("the cat sat on the mat", "the cat is on the mat", 0.48549177170732344),
    ("d c b a", "a b c d", 0.4518010018049224),
    ("a b a b a b", "a b", 0.2730120862709067),
    ("a b c x d e f", "a b c d e f", 0.4974292207467277),
    ("[v.name] is a nice place", "[v.name] is a nice restaurant", 0.7521206186172787),
    ("[v.name] is in the [v.area]", "[v.name] is a [v.food] restaurant in the [v.area]", 0.3316331950155214),
    ("what price range do you want", "what price range would you like", 0.4272870063962341),
    ("i am sorry there is no such place", "sorry there is no such restaurant", 0.5779935573953489),
    ("a a a a a a a a", "a a a", 0.28606242122742576),
    ("b", "a", 0.0),
    ("a b", "b a", 0.8408964152537145),
    ("the phone is [v.phone]", "the phone number of [v.name] is [v.phone]", 0.2808708327044614),
    ("one two three four five six seven", "one two three four five six seven eight nine ten", 0.6514390575310556),
];

/// Decode records built from gold references with random corruption:
/// delexicalised tokens dropped or swapped and random offered venues.
pub fn synthetic_records(dialogues: &[Dialogue], database: &Database, rng: &mut Rng) -> Vec<DecodeRecord> {
    let pool = ["[v.name]", "[v.phone]", "[v.address]", "[v.food]", "[v.area]", "[v.postcode]", "[s.food]", "[v.pricerange]"];
    let mut out = Vec::new();
    for d in dialogues {
        for (t, turn) in d.turns.iter().enumerate() {
            let mut chosen: Vec<String> = Vec::new();
            for tok in &turn.sys {
                match rng.below(6) {
                    0 if tok.starts_with('[') => {}
                    1 => chosen.push(pool[rng.below(pool.len())].to_string()),
                    _ => chosen.push(tok.clone()),
                }
            }
            let offered_entity = match rng.below(3) {
                0 => None,
                _ => Some(database.entities[rng.below(database.entities.len())].name.clone()),
            };
            out.push(DecodeRecord {
                dialogue_id: d.id.clone(),
                turn: t,
                candidates: vec![ScoredTokens {
                    tokens: chosen.clone(),
                    score: -1.0,
                }],
                chosen,
                surface: String::new(),
                offered_entity,
                reference: turn.sys.clone(),
                goal: d.goal.clone(),
            });
        }
    }
    out
}

pub fn brute_slot_match(records: &[DecodeRecord]) -> f64 {
    let mut rates = Vec::new();
    for r in records {
        let mut kinds: Vec<&String> = Vec::new();
        for t in &r.chosen {
            if (t.starts_with("[v.") || t.starts_with("[s.")) && t.ends_with(']') && !kinds.contains(&t) {
                kinds.push(t);
            }
        }
        if kinds.is_empty() {
            continue;
        }
        let hits = kinds.iter().filter(|k| r.reference.contains(k)).count();
        rates.push(hits as f64 / kinds.len() as f64);
    }
    if rates.is_empty() {
        0.0
    } else {
        100.0 * rates.iter().sum::<f64>() / rates.len() as f64
    }
}

pub fn brute_success(turns: &[&DecodeRecord], database: &Database) -> bool {
    let goal = &turns[0].goal;
    for (i, r) in turns.iter().enumerate() {
        if !r.chosen.iter().any(|t| t == "[v.name]") {
            continue;
        }
        let Some(name) = &r.offered_entity else { continue };
        let Some(entity) = database.entities.iter().find(|e| &e.name == name) else {
            continue;
        };
        let fits = goal.constraints.iter().all(|(slot, label)| match label {
            InformLabel::Value(v) => entity.slots.get(slot) == Some(v),
            _ => true,
        });
        if !fits {
            continue;
        }
        return goal
            .requests
            .iter()
            .all(|slot| turns[i..].iter().any(|r| r.chosen.contains(&format!("[v.{slot}]"))));
    }
    false
}

/// Labels from a single backward pass per turn that accumulates the tokens
/// seen so far, plus a forward pass over turns for the offered flag.
pub fn suffix_scan(d: &Dialogue, spec: &IndicatorSpec, attention: bool) -> Vec<Vec<Vec<f64>>> {
    let first_offer = d.turns.iter().position(|t| t.sys.contains(&value_token("name")));
    d.turns
        .iter()
        .enumerate()
        .map(|(ti, turn)| {
            let offered = first_offer.is_some_and(|f| ti >= f);
            let mut seen: HashSet<&str> = HashSet::new();
            let mut rows = vec![Vec::new(); turn.sys.len()];
            for j in (0..turn.sys.len()).rev() {
                seen.insert(&turn.sys[j]);
                rows[j] = spec.0.iter().map(|id| if id == OFFERED { offered } else { seen.contains(id.as_str()) }).collect::<Vec<bool>>();
            }
            if !attention {
                let whole = rows.first().cloned().unwrap_or_default();
                for r in rows.iter_mut() {
                    *r = whole.clone();
                }
            }
            rows.into_iter()
                .map(|r| r.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
                .collect()
        })
        .collect()
}

/// Log-probability of `tokens` by stepping the model by hand.
pub fn log_prob(model: &Model, input: &TurnInput, tokens: &[usize]) -> f64 {
    let ctx = model.context(input).unwrap();
    let mut state = model.start_state();
    let mut sum = 0.0;
    for &t in tokens {
        let rec = model.advance(&ctx, &state);
        sum += rec.dist[t].ln();
        state = DecodeState {
            h: rec.cell.h,
            c: rec.cell.c,
            prev: t,
        };
    }
    sum
}

/// Every sequence of at most `max_len` tokens that ends at its first
/// end-of-sentence.
pub fn terminated_sequences(vocab: usize, eos: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut open: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in open {
            for t in 0..vocab {
                let mut s = prefix.clone();
                s.push(t);
                if t == eos {
                    out.push(s);
                } else {
                    next.push(s);
                }
            }
        }
        open = next;
    }
    out
}
