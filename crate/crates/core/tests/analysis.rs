mod common;

use std::sync::OnceLock;

use snapdial::analysis::{
    attention_heatmap, compare_entropy, config_label, gate_stats, gates_csv, mean_attention_entropy, snapshot_trace,
    GATES_HEADER,
};
use snapdial::decoder::Variant;
use snapdial::decoding::BeamConfig;
use snapdial::model::{Model, TurnInput};
use snapdial::numerics::ParamSet;
use snapdial::training::{prepare_all, train, TrainConfig};

fn fixture() -> &'static common::Fixture {
    static F: OnceLock<common::Fixture> = OnceLock::new();
    F.get_or_init(|| common::fixture(40, 31, 1))
}

fn cfg(variant: Variant, attention: bool, snapshot: bool) -> TrainConfig {
    TrainConfig {
        variant,
        attention,
        snapshot,
        hidden: 10,
        lr: 0.5,
        max_epochs: 2,
        seed: 4,
        ..TrainConfig::default()
    }
}

fn test_inputs(model: &Model) -> Vec<TurnInput> {
    let f = fixture();
    prepare_all(&f.world, model, &f.splits.test[..3], 1).into_iter().flatten().collect()
}

const BEAM: BeamConfig = BeamConfig {
    width: 4,
    candidates: 2,
    max_len: 15,
};

#[test]
fn zero_parameters_open_every_gate_halfway() {
    let f = fixture();
    for variant in Variant::ALL {
        let mut model = Model::init(&cfg(variant, true, false), f.vocab.clone(), &f.world.ontology).unwrap();
        for p in model.params_mut() {
            p.value.fill(0.0);
        }
        let stats = gate_stats(&model, &test_inputs(&model)).unwrap();
        assert!(stats.steps > 0);
        assert!((stats.mean_i - 0.5).abs() < 1e-15);
        assert!((stats.mean_f - 0.5).abs() < 1e-15);
        assert!((stats.mean_o - 0.5).abs() < 1e-15);
        match variant {
            Variant::Lm => assert_eq!(stats.mean_r, None),
            _ => {
                assert!((stats.mean_r.unwrap() - 0.5).abs() < 1e-15);
                assert!((stats.r_over_o.unwrap() - 1.0).abs() < 1e-15);
                assert!((stats.r_over_o_elementwise.unwrap() - 1.0).abs() < 1e-15);
            }
        }
        // Uniform attention over the trackers.
        let map = attention_heatmap(&model, &test_inputs(&model)[0], &BEAM).unwrap();
        let s = map.trackers.len() as f64;
        for row in &map.rows {
            assert!(row.iter().all(|a| (a - 1.0 / s).abs() < 1e-15));
        }
        assert!((map.mean_entropy() - s.ln()).abs() < 1e-12);
    }
}

#[test]
fn trained_exports_are_well_formed() {
    let f = fixture();
    let (model, _) = train(&cfg(Variant::Hybrid, true, true), &f.world, &f.vocab, &f.splits.train, &f.splits.valid, None).unwrap();
    let inputs = test_inputs(&model);
    assert_eq!(config_label(&model), "hybrid+att/summary/snapshot");
    for input in &inputs {
        let map = attention_heatmap(&model, input, &BEAM).unwrap();
        assert_eq!(map.trackers.len(), 9);
        assert_eq!(map.rows.len(), map.tokens.len());
        for row in &map.rows {
            assert_eq!(row.len(), 9);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&a| a >= 0.0));
        }
        let ent = map.mean_entropy();
        assert!(ent >= 0.0 && ent <= 9f64.ln() + 1e-12);
        let trace = snapshot_trace(&model, input, &BEAM).unwrap();
        assert_eq!(trace.indicators, model.spec.0);
        assert_eq!(trace.tokens, map.tokens);
        for row in &trace.values {
            assert_eq!(row.len(), 8);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    let stats = gate_stats(&model, &inputs).unwrap();
    for g in [stats.mean_i, stats.mean_f, stats.mean_o, stats.mean_r.unwrap()] {
        assert!(g > 0.0 && g < 1.0);
    }
    let csv = gates_csv(&[stats]);
    assert!(csv.starts_with(GATES_HEADER));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn exports_require_the_matching_model() {
    let f = fixture();
    let plain = Model::init(&cfg(Variant::Mem, false, false), f.vocab.clone(), &f.world.ontology).unwrap();
    let input = &test_inputs(&plain)[0];
    assert!(attention_heatmap(&plain, input, &BEAM).is_err());
    assert!(snapshot_trace(&plain, input, &BEAM).is_err());
}

#[test]
fn entropy_comparison_is_consistent() {
    let f = fixture();
    let snap = Model::init(&cfg(Variant::Hybrid, true, true), f.vocab.clone(), &f.world.ontology).unwrap();
    let mut flat = Model::init(&cfg(Variant::Hybrid, true, false), f.vocab.clone(), &f.world.ontology).unwrap();
    flat.policy.attention.as_mut().unwrap().r.value.fill(0.0);
    let inputs = test_inputs(&snap);
    let cmp = compare_entropy(&snap, &flat, &inputs, &BEAM).unwrap();
    assert!((cmp.plain - 9f64.ln()).abs() < 1e-12);
    assert_eq!(cmp.snapshot, mean_attention_entropy(&snap, &inputs, &BEAM).unwrap());
    assert!(cmp.sharper);
}
