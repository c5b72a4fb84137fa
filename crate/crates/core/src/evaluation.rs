//! BLEU on skeletal forms, slot matching, task success and multi-seed
//! aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{is_delex_token, value_token, Database, EOS};
use crate::decoding::DecodeRecord;
use crate::tracker::BeliefRepr;

/// Clipped n-gram matches and candidate n-gram count.
pub fn ngram_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let mut refs: HashMap<&[String], usize> = HashMap::new();
    if reference.len() >= n {
        for g in reference.windows(n) {
            *refs.entry(g).or_default() += 1;
        }
    }
    let mut cands: HashMap<&[String], usize> = HashMap::new();
    for g in candidate.windows(n) {
        *cands.entry(g).or_default() += 1;
    }
    let matched = cands.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
    (matched, candidate.len() + 1 - n)
}

/// Sentence BLEU: geometric mean of modified n-gram precisions up to
/// `max_n` with a brevity penalty. Precisions for `n >= 2` are smoothed by
/// adding one to both counts.
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, t) = ngram_matches(candidate, reference, n);
        let p = if n == 1 {
            m as f64 / t as f64
        } else {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    brevity_penalty(candidate.len(), reference.len()) * (log_sum / max_n as f64).exp()
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Unsmoothed corpus BLEU over aligned candidate/reference pairs.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<String>)], max_n: usize) -> f64 {
    let (mut c, mut r) = (0, 0);
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    for (cand, reference) in pairs {
        c += cand.len();
        r += reference.len();
        for n in 1..=max_n {
            let (m, t) = ngram_matches(cand, reference, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    if c == 0 || matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return 0.0;
    }
    let log_p: f64 = matched.iter().zip(&total).map(|(&m, &t)| (m as f64 / t as f64).ln()).sum();
    brevity_penalty(c, r) * (log_p / max_n as f64).exp()
}

/// Sentence with the end-of-sentence marker removed.
pub fn strip_eos(tokens: &[String]) -> Vec<String> {
    tokens.iter().filter(|t| *t != EOS).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum TopKMode {
    /// Best BLEU among the candidates.
    #[default]
    Best,
    /// Mean BLEU over the candidates.
    Mean,
}

/// `(t1, t5)` BLEU for a ranked candidate list.
pub fn turn_bleu(candidates: &[Vec<String>], reference: &[String], mode: TopKMode) -> (f64, f64) {
    if candidates.is_empty() {
        return (0.0, 0.0);
    }
    let reference = strip_eos(reference);
    let scores: Vec<f64> = candidates.iter().take(5).map(|c| bleu(&strip_eos(c), &reference, 4)).collect();
    let t5 = match mode {
        TopKMode::Best => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        TopKMode::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    };
    (scores[0], t5)
}

/// Type-level share of the candidate's delexicalised tokens that also occur
/// in the reference; `None` when the candidate has none.
pub fn slot_match(candidate: &[String], reference: &[String]) -> Option<f64> {
    let cand: BTreeSet<&String> = candidate.iter().filter(|t| is_delex_token(t)).collect();
    if cand.is_empty() {
        return None;
    }
    let reference: BTreeSet<&String> = reference.iter().filter(|t| is_delex_token(t)).collect();
    Some(cand.intersection(&reference).count() as f64 / cand.len() as f64)
}

/// Corpus-mode task success of one dialogue's decoded turns (in turn order).
pub fn task_success(turns: &[&DecodeRecord], database: &Database) -> bool {
    let Some(first) = turns.first() else {
        return false;
    };
    let goal = &first.goal;
    let name = value_token("name");
    let offer = turns.iter().position(|r| {
        r.chosen.contains(&name)
            && r
                .offered_entity
                .as_deref()
                .and_then(|e| database.by_name(e))
                .is_some_and(|e| goal.satisfied_by(e))
    });
    let Some(offer) = offer else {
        return false;
    };
    goal.requests.iter().all(|slot| {
        let tok = value_token(slot);
        turns[offer..].iter().any(|r| r.chosen.contains(&tok))
    })
}

/// Metrics of one seed's decode dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeedMetrics {
    pub seed: u64,
    pub success: f64,
    pub slot_match: f64,
    pub t5_bleu: f64,
    pub t1_bleu: f64,
    pub corpus_bleu: f64,
    pub dialogues: usize,
    pub turns: usize,
}

/// Group records by dialogue, preserving first-appearance order.
pub fn by_dialogue(records: &[DecodeRecord]) -> Vec<Vec<&DecodeRecord>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&DecodeRecord>> = BTreeMap::new();
    for r in records {
        let g = groups.entry(&r.dialogue_id).or_default();
        if g.is_empty() {
            order.push(&r.dialogue_id);
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let mut g = groups.remove(id).unwrap_or_default();
            g.sort_by_key(|r| r.turn);
            g
        })
        .collect()
}

pub fn evaluate_records(seed: u64, records: &[DecodeRecord], database: &Database, mode: TopKMode) -> SeedMetrics {
    let (mut t1, mut t5) = (0.0, 0.0);
    let (mut sm_total, mut sm_count) = (0.0, 0usize);
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let cands: Vec<Vec<String>> = r.candidates.iter().map(|c| c.tokens.clone()).collect();
        let (a, b) = turn_bleu(&cands, &r.reference, mode);
        t1 += a;
        t5 += b;
        if let Some(s) = slot_match(&r.chosen, &r.reference) {
            sm_total += s;
            sm_count += 1;
        }
        pairs.push((strip_eos(&r.chosen), strip_eos(&r.reference)));
    }
    let dialogues = by_dialogue(records);
    let successes = dialogues.iter().filter(|d| task_success(d, database)).count();
    let turns = records.len().max(1) as f64;
    SeedMetrics {
        seed,
        success: 100.0 * successes as f64 / dialogues.len().max(1) as f64,
        slot_match: if sm_count == 0 { 0.0 } else { 100.0 * sm_total / sm_count as f64 },
        t5_bleu: t5 / turns,
        t1_bleu: t1 / turns,
        corpus_bleu: corpus_bleu(&pairs, 4),
        dialogues: dialogues.len(),
        turns: records.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

/// One row of the results table with its per-seed breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricReport {
    pub arch: String,
    pub belief: BeliefRepr,
    pub snapshot: bool,
    pub success: MeanStd,
    pub slot_match: MeanStd,
    pub t5_bleu: MeanStd,
    pub t1_bleu: MeanStd,
    pub corpus_bleu: MeanStd,
    pub per_seed: Vec<SeedMetrics>,
    /// Seeds that failed to train or decode.
    pub incomplete: Vec<u64>,
}

impl MetricReport {
    pub fn aggregate(arch: &str, belief: BeliefRepr, snapshot: bool, per_seed: Vec<SeedMetrics>, incomplete: Vec<u64>) -> Self {
        let col = |f: fn(&SeedMetrics) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>());
        MetricReport {
            arch: arch.to_string(),
            belief,
            snapshot,
            success: col(|m| m.success),
            slot_match: col(|m| m.slot_match),
            t5_bleu: col(|m| m.t5_bleu),
            t1_bleu: col(|m| m.t1_bleu),
            corpus_bleu: col(|m| m.corpus_bleu),
            per_seed,
            incomplete,
        }
    }

    pub fn seed_count(&self) -> usize {
        self.per_seed.len()
    }
}

pub const CSV_HEADER: &str =
    "arch,belief,snapshot,success,successStd,slotMatch,slotMatchStd,t5Bleu,t5BleuStd,t1Bleu,t1BleuStd,seedCount";

/// One row per report with means and sample standard deviations.
pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.arch,
            r.belief,
            r.snapshot,
            r.success.mean,
            r.success.std,
            r.slot_match.mean,
            r.slot_match.std,
            r.t5_bleu.mean,
            r.t5_bleu.std,
            r.t1_bleu.mean,
            r.t1_bleu.std,
            r.seed_count()
        ));
    }
    s
}

pub const PAIRED_HEADER: &str = "arch,belief,success,successSnapshot,slotMatch,slotMatchSnapshot,t5Bleu,t5BleuSnapshot,t1Bleu,t1BleuSnapshot,seedCount";

/// The results table: one row per configuration, each metric without and
/// with snapshot learning side by side. Pairs are `(plain, snapshot)`.
pub fn paired_csv(pairs: &[(MetricReport, MetricReport)]) -> String {
    let mut s = format!("{PAIRED_HEADER}\n");
    for (p, q) in pairs {
        s.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.4},{:.4},{:.4},{:.4},{}\n",
            p.arch,
            p.belief,
            p.success.mean,
            q.success.mean,
            p.slot_match.mean,
            q.slot_match.mean,
            p.t5_bleu.mean,
            q.t5_bleu.mean,
            p.t1_bleu.mean,
            q.t1_bleu.mean,
            p.seed_count().min(q.seed_count())
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_sentences_score_one() {
        let s = toks("there are [v.count] places in the [v.area]");
        assert!((bleu(&s, &s, 4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_candidate_is_penalised() {
        let b = bleu(&toks("a b"), &toks("a b c"), 4);
        assert!((b - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn slot_match_is_candidate_relative() {
        let r = slot_match(&toks("[v.food] [v.area] x"), &toks("[v.food] y"));
        assert_eq!(r, Some(0.5));
        assert_eq!(slot_match(&toks("hello"), &toks("[v.food]")), None);
    }

    #[test]
    fn single_value_has_zero_std() {
        assert_eq!(mean_std(&[3.0]).std, 0.0);
        assert_eq!(mean_std(&[2.0; 10]).std, 0.0);
    }
}
