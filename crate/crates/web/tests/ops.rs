use snapdial::decoder::Variant;
use snapdial::experiment::Setup;
use snapdial::model::Model;
use snapdial::training::{Checkpoint, TrainConfig};
use snapdial_web::ops::{sample_dialogue, score_response, Chat};

#[test]
fn sample_targets_have_one_column_per_indicator() {
    let d = sample_dialogue(11).unwrap();
    assert!(!d.turns.is_empty());
    for t in &d.turns {
        assert_eq!(t.targets.len(), t.system.len());
        for row in &t.targets {
            assert_eq!(row.len(), d.indicators.len());
            assert!(row.iter().all(|&v| v <= 1));
        }
    }
    assert_eq!(sample_dialogue(11).unwrap().id, d.id);
}

#[test]
fn scores_known_pairs() {
    let same = score_response("the [v.name] serves [v.food] food", "the [v.name] serves [v.food] food");
    assert!((same.bleu - 1.0).abs() < 1e-12);
    assert_eq!(same.ngrams, vec![(5, 5), (4, 4), (3, 3), (2, 2)]);
    assert_eq!(same.slot_match, Some(1.0));
    assert_eq!(same.candidate_slots, vec!["[v.name]", "[v.food]"]);

    let disjoint = score_response("a [v.food]", "b [v.name]");
    assert_eq!(disjoint.bleu, 0.0);
    assert_eq!(disjoint.slot_match, Some(0.0));

    let plain = score_response("hello there", "hello there");
    assert_eq!(plain.slot_match, None);
    assert!(plain.candidate_slots.is_empty());
}

fn checkpoint(attention: bool, snapshot: bool) -> String {
    let setup = Setup::synthetic(30, 3).unwrap();
    let cfg = TrainConfig {
        variant: Variant::Hybrid,
        attention,
        snapshot,
        hidden: 10,
        ..TrainConfig::default()
    };
    let model = Model::init(&cfg, setup.vocab.clone(), &setup.world.ontology).unwrap();
    Checkpoint::new(&model, &setup.world).to_json()
}

#[test]
fn chat_reports_views_matching_the_model() {
    let mut chat = Chat::from_json(&checkpoint(true, true), 1).unwrap();
    let summary = chat.describe();
    assert!(summary.snapshot);
    assert_eq!(summary.hidden, 10);
    let reply = chat.say("i want a cheap restaurant").unwrap();
    assert!(!reply.skeletal.is_empty());
    let heat = reply.heat_map.unwrap();
    assert_eq!(heat.rows.len(), heat.tokens.len());
    for row in &heat.rows {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let trace = reply.trace.unwrap();
    assert!(trace.values.iter().flatten().all(|v| (0.0..=1.0).contains(v)));

    let mut plain = Chat::from_json(&checkpoint(false, false), 1).unwrap();
    let reply = plain.say("anything in the north").unwrap();
    assert!(reply.heat_map.is_none());
    assert!(reply.trace.is_none());
}

#[test]
fn rejects_malformed_checkpoints() {
    assert!(Chat::from_json("{}", 1).is_err());
    assert!(Chat::from_json("not json", 1).is_err());
}
