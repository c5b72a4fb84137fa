//! Gate statistics, attention heat maps and snapshot-neuron traces.

use serde::{Deserialize, Serialize};

use crate::decoding::{beam_search, BeamConfig};
use crate::error::{Error, Result};
use crate::model::{Model, StepRecord, TurnContext, TurnInput};
use crate::snapshot::squeeze;

/// Average gate activations over every generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GateStats {
    pub config: String,
    pub mean_i: f64,
    pub mean_f: f64,
    pub mean_o: f64,
    /// Reading gate mean; absent for `lm`.
    pub mean_r: Option<f64>,
    /// `mean(r) / mean(o)`.
    pub r_over_o: Option<f64>,
    /// `mean(r / o)` over units and steps.
    pub r_over_o_elementwise: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, Default)]
struct GateSums {
    i: f64,
    f: f64,
    o: f64,
    r: f64,
    ratio: f64,
    units: usize,
    steps: usize,
}

impl GateSums {
    fn add(&mut self, rec: &StepRecord) {
        let c = &rec.cell;
        self.i += c.i.iter().sum::<f64>();
        self.f += c.f.iter().sum::<f64>();
        self.o += c.o.iter().sum::<f64>();
        self.r += c.r.iter().sum::<f64>();
        self.ratio += c.r.iter().zip(&c.o).map(|(r, o)| r / o).sum::<f64>();
        self.units += c.i.len();
        self.steps += 1;
    }
}

/// Gate means over teacher-forced decoding of the given turns.
pub fn gate_stats(model: &Model, inputs: &[TurnInput]) -> Result<GateStats> {
    let mut sums = GateSums::default();
    for input in inputs {
        for rec in &model.forward(input)?.steps {
            sums.add(rec);
        }
    }
    let u = sums.units.max(1) as f64;
    let has_r = model.config.variant.has_reading_gate();
    let mean_o = sums.o / u;
    Ok(GateStats {
        config: config_label(model),
        mean_i: sums.i / u,
        mean_f: sums.f / u,
        mean_o,
        mean_r: has_r.then(|| sums.r / u),
        r_over_o: has_r.then(|| (sums.r / u) / mean_o),
        r_over_o_elementwise: has_r.then(|| sums.ratio / u),
        steps: sums.steps,
    })
}

/// e.g. `hybrid+att/summary/snapshot`.
pub fn config_label(model: &Model) -> String {
    let c = &model.config;
    format!(
        "{}/{}/{}",
        c.arch_label(),
        c.belief,
        if c.snapshot { "snapshot" } else { "plain" }
    )
}

pub const GATES_HEADER: &str = "config,meanI,meanF,meanRoverO";

pub fn gates_csv(stats: &[GateStats]) -> String {
    let mut s = format!("{GATES_HEADER}\n");
    for g in stats {
        let ro = g.r_over_o.map(|v| format!("{v:.6}")).unwrap_or_default();
        s.push_str(&format!("{},{:.6},{:.6},{}\n", g.config, g.mean_i, g.mean_f, ro));
    }
    s
}

/// Attention weights per generated token, one column per tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub tokens: Vec<String>,
    pub trackers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl HeatMap {
    /// Mean Shannon entropy (nats) of the rows.
    pub fn mean_entropy(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let h: f64 = self
            .rows
            .iter()
            .map(|r| -r.iter().filter(|&&a| a > 0.0).map(|a| a * a.ln()).sum::<f64>())
            .sum();
        h / self.rows.len() as f64
    }
}

/// Squeezed snapshot activations per generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronTrace {
    pub tokens: Vec<String>,
    pub indicators: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Top-1 decode of a turn together with its per-step records.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTurn {
    pub context: TurnContext,
    pub tokens: Vec<usize>,
    pub steps: Vec<StepRecord>,
}

pub fn decode_turn(model: &Model, input: &TurnInput, beam: &BeamConfig) -> Result<DecodedTurn> {
    let context = model.context(input)?;
    let tokens = beam_search(model, &context, beam).remove(0).tokens;
    let steps = model.replay(&context, &tokens);
    Ok(DecodedTurn { context, tokens, steps })
}

pub fn heatmap_from(model: &Model, decoded: &DecodedTurn) -> Result<HeatMap> {
    if !model.config.attention {
        return Err(Error::Unsupported("attention heat maps need an attention model".into()));
    }
    Ok(HeatMap {
        tokens: decoded.tokens.iter().map(|&t| model.vocab.token(t).to_string()).collect(),
        trackers: model.tracker_names.clone(),
        rows: decoded
            .steps
            .iter()
            .map(|s| s.attention.as_ref().expect("attentive step").alpha.clone())
            .collect(),
    })
}

pub fn trace_from(model: &Model, decoded: &DecodedTurn) -> Result<NeuronTrace> {
    if !model.config.snapshot {
        return Err(Error::Unsupported("snapshot traces need a snapshot-trained model".into()));
    }
    let d = model.spec.len();
    Ok(NeuronTrace {
        tokens: decoded.tokens.iter().map(|&t| model.vocab.token(t).to_string()).collect(),
        indicators: model.spec.0.clone(),
        values: decoded
            .steps
            .iter()
            .map(|s| s.m[..d].iter().map(|&a| squeeze(a)).collect())
            .collect(),
    })
}

/// Heat map over the decoded top-1 response of a turn.
pub fn attention_heatmap(model: &Model, input: &TurnInput, beam: &BeamConfig) -> Result<HeatMap> {
    if !model.config.attention {
        return Err(Error::Unsupported("attention heat maps need an attention model".into()));
    }
    heatmap_from(model, &decode_turn(model, input, beam)?)
}

/// Snapshot-neuron trace over the decoded top-1 response of a turn.
pub fn snapshot_trace(model: &Model, input: &TurnInput, beam: &BeamConfig) -> Result<NeuronTrace> {
    if !model.config.snapshot {
        return Err(Error::Unsupported("snapshot traces need a snapshot-trained model".into()));
    }
    trace_from(model, &decode_turn(model, input, beam)?)
}

/// Mean heat-map row entropy over the decoded responses of `inputs`.
pub fn mean_attention_entropy(model: &Model, inputs: &[TurnInput], beam: &BeamConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut rows = 0usize;
    for input in inputs {
        let map = attention_heatmap(model, input, beam)?;
        total += map.mean_entropy() * map.rows.len() as f64;
        rows += map.rows.len();
    }
    Ok(if rows == 0 { 0.0 } else { total / rows as f64 })
}

/// Paired attention-entropy comparison of a snapshot model and its twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntropyComparison {
    pub snapshot: f64,
    pub plain: f64,
    /// True when the snapshot model's rows are more concentrated.
    pub sharper: bool,
}

pub fn compare_entropy(snapshot: &Model, plain: &Model, inputs: &[TurnInput], beam: &BeamConfig) -> Result<EntropyComparison> {
    let s = mean_attention_entropy(snapshot, inputs, beam)?;
    let p = mean_attention_entropy(plain, inputs, beam)?;
    Ok(EntropyComparison {
        snapshot: s,
        plain: p,
        sharper: s < p,
    })
}
