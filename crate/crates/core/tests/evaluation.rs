mod common;

use proptest::prelude::*;
use common::oracles::{brute_slot_match, brute_success, synthetic_records, BLEU_CASES};
use snapdial::corpus::{value_token, Dialogue, EOS};
use snapdial::decoding::DecodeRecord;
use snapdial::evaluation::{
    bleu, by_dialogue, corpus_bleu, evaluate_records, mean_std, slot_match, task_success, turn_bleu, TopKMode,
};
use snapdial::numerics::Rng;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[test]
fn sentence_bleu_hand_cases() {
    assert!(BLEU_CASES.len() >= 20);
    for (c, r, want) in BLEU_CASES {
        let got = bleu(&toks(c), &toks(r), 4);
        assert!((got - want).abs() < 1e-12, "{c:?} vs {r:?}: {got} != {want}");
    }
}

#[test]
fn bleu_closed_forms() {
    // Four-token exact prefix of a six-token reference: only the brevity
    // penalty applies.
    let bp = (1.0f64 - 6.0 / 4.0).exp();
    assert!((bleu(&toks("a b c d"), &toks("a b c d e f"), 4) - bp).abs() < 1e-15);
    // Unigram-only BLEU is clipped precision.
    assert!((bleu(&toks("a a b z"), &toks("a b c d"), 1) - 0.5).abs() < 1e-15);
    assert_eq!(bleu(&[], &toks("a"), 4), 0.0);
    assert_eq!(bleu(&toks("a"), &[], 4), 0.0);
}

#[test]
fn turn_bleu_strips_eos_and_ranks() {
    let reference = toks("a b c d <eos>");
    let cands = vec![toks("x y <eos>"), toks("a b c d <eos>"), toks("a b <eos>")];
    let (t1, t5) = turn_bleu(&cands, &reference, TopKMode::Best);
    assert_eq!(t1, 0.0);
    assert_eq!(t5, 1.0);
    let (_, mean) = turn_bleu(&cands, &reference, TopKMode::Mean);
    let third = bleu(&toks("a b"), &toks("a b c d"), 4);
    assert!((mean - (1.0 + third) / 3.0).abs() < 1e-15);
    // Only the first five candidates count.
    let mut many = vec![toks("z <eos>"); 5];
    many.push(toks("a b c d <eos>"));
    assert_eq!(turn_bleu(&many, &reference, TopKMode::Best).1, 0.0);
    assert_eq!(turn_bleu(&[], &reference, TopKMode::Best), (0.0, 0.0));
    assert_eq!(EOS, "<eos>");
}

#[test]
fn corpus_bleu_pools_counts() {
    let pairs = vec![(toks("a b c d"), toks("a b c d")), (toks("e f g h"), toks("e f g h"))];
    assert!((corpus_bleu(&pairs, 4) - 1.0).abs() < 1e-15);
    // Unigram: 3 of 5 tokens match; brevity: c = 5, r = 6.
    let pairs = vec![(toks("a b z"), toks("a b c d")), (toks("e y"), toks("e f"))];
    let want = (1.0f64 - 6.0 / 5.0).exp() * 0.6;
    assert!((corpus_bleu(&pairs, 1) - want).abs() < 1e-15);
}

#[test]
fn slot_match_hand_cases() {
    let r = toks("[v.name] serves [v.food] in the [v.area] <eos>");
    assert_eq!(slot_match(&toks("hello <eos>"), &r), None);
    assert_eq!(slot_match(&toks("[v.name] [v.name] <eos>"), &r), Some(1.0));
    assert_eq!(slot_match(&toks("[v.name] [v.phone] <eos>"), &r), Some(0.5));
    assert_eq!(slot_match(&toks("[s.food] [v.phone] [v.area] <eos>"), &r), Some(1.0 / 3.0));
}

#[test]
fn sample_standard_deviation() {
    let s = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!(s.mean, 5.0);
    assert!((s.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
    assert_eq!(mean_std(&[3.0]).std, 0.0);
}

#[test]
fn metrics_match_brute_force_on_fifty_dialogues() {
    let f = common::fixture(100, 12, 1);
    let dialogues: Vec<Dialogue> = f.splits.train.iter().take(50).cloned().collect();
    assert_eq!(dialogues.len(), 50);
    let db = &f.world.database;
    for seed in 0..4 {
        let records = synthetic_records(&dialogues, db, &mut Rng::new(seed));
        let metrics = evaluate_records(seed, &records, db, TopKMode::Best);
        assert!((metrics.slot_match - brute_slot_match(&records)).abs() < 1e-9);
        let groups = by_dialogue(&records);
        assert_eq!(groups.len(), 50);
        let mut wins = 0;
        for g in &groups {
            let want = brute_success(g, db);
            assert_eq!(task_success(g, db), want, "{}", g[0].dialogue_id);
            wins += want as usize;
        }
        assert!(wins > 0 && wins < 50, "degenerate oracle: {wins} successes");
        assert!((metrics.success - 2.0 * wins as f64).abs() < 1e-9);
        assert_eq!(metrics.turns, records.len());
    }
}

#[test]
fn gold_dialogues_with_true_offers_succeed() {
    // Offering a goal-satisfying venue on every turn makes success depend
    // only on the requests being answered.
    let f = common::fixture(60, 13, 1);
    let db = &f.world.database;
    let mut checked = 0;
    for d in f.splits.train.iter().take(20) {
        let Some(venue) = db.entities.iter().find(|e| d.goal.satisfied_by(e)) else { continue };
        let records: Vec<DecodeRecord> = d
            .turns
            .iter()
            .enumerate()
            .map(|(t, turn)| {
                let mut chosen = turn.sys.clone();
                if t == 0 {
                    chosen.insert(0, value_token("name"));
                    for slot in &d.goal.requests {
                        chosen.insert(0, value_token(slot));
                    }
                }
                DecodeRecord {
                    dialogue_id: d.id.clone(),
                    turn: t,
                    candidates: Vec::new(),
                    chosen,
                    surface: String::new(),
                    offered_entity: Some(venue.name.clone()),
                    reference: turn.sys.clone(),
                    goal: d.goal.clone(),
                }
            })
            .collect();
        let refs: Vec<&DecodeRecord> = records.iter().collect();
        assert!(task_success(&refs, db));
        checked += 1;
    }
    assert!(checked >= 5);
}

proptest! {
    #[test]
    fn bleu_is_bounded(c in prop::collection::vec(0u8..5, 0..12), r in prop::collection::vec(0u8..5, 0..12)) {
        let c: Vec<String> = c.iter().map(|x| x.to_string()).collect();
        let r: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        let b = bleu(&c, &r, 4);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        if !c.is_empty() {
            prop_assert!((bleu(&c, &c, 4) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slot_match_is_a_rate(c in prop::collection::vec(0usize..6, 0..10), r in prop::collection::vec(0usize..6, 0..10)) {
        let slots = ["name", "food", "area", "phone", "address", "postcode"];
        let c: Vec<String> = c.iter().map(|&i| value_token(slots[i])).collect();
        let r: Vec<String> = r.iter().map(|&i| value_token(slots[i])).collect();
        match slot_match(&c, &r) {
            None => prop_assert!(c.is_empty()),
            Some(s) => prop_assert!((0.0..=1.0).contains(&s)),
        }
    }
}
