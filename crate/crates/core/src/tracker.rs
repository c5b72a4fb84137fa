//! Per-slot belief trackers over bag-of-n-gram features of user turns.
//!
//! Features are unigrams and bigrams of the user turn (surface and
//! delexicalised) and of the preceding system turn, which tells a bare
//! "i don't mind" which slot it answers. Informable trackers are recurrent
//! at the turn level: the previous belief of the slot feeds back through a
//! square matrix, so evidence persists until contradicted. A single tied
//! weight per slot scores explicit value mentions. Requestable trackers are
//! per-turn logistic units.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize, value_synonyms, Dialogue, InformLabel, Ontology, Turn};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid_scalar, softmax_in_place, Rng, Tensor};

pub const TRACKER_VERSION: u32 = 1;

/// Belief representation fed to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BeliefRepr {
    Full,
    #[default]
    Summary,
}

impl std::fmt::Display for BeliefRepr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BeliefRepr::Full => "full",
            BeliefRepr::Summary => "summary",
        })
    }
}

impl std::str::FromStr for BeliefRepr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(BeliefRepr::Full),
            "summary" => Ok(BeliefRepr::Summary),
            _ => Err(Error::Config(format!("unknown belief representation {s:?}"))),
        }
    }
}

/// Per-slot distributions after some turn. Informable vectors are ordered
/// as the ontology values followed by dontcare and not-mentioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub informable: Vec<Vec<f64>>,
    pub requestable: Vec<f64>,
}

impl BeliefState {
    /// All mass on not-mentioned; nothing requested.
    pub fn initial(ontology: &Ontology) -> Self {
        let informable = (0..ontology.informable.0.len())
            .map(|i| {
                let mut v = vec![0.0; ontology.class_count(i)];
                *v.last_mut().unwrap() = 1.0;
                v
            })
            .collect();
        BeliefState {
            informable,
            requestable: vec![0.0; ontology.requestable.len()],
        }
    }

    /// Most probable class per informable slot; ties go to the earlier class.
    pub fn top_labels(&self, ontology: &Ontology) -> Vec<InformLabel> {
        self.informable
            .iter()
            .zip(&ontology.informable.0)
            .map(|(p, (_, values))| InformLabel::from_class(argmax(p), values))
            .collect()
    }

    /// Top concrete value per informable slot, for lexicalisation.
    pub fn top_values(&self, ontology: &Ontology) -> BTreeMap<String, String> {
        ontology
            .informable_slots()
            .zip(self.top_labels(ontology))
            .filter_map(|(s, l)| l.value().map(|v| (s.to_string(), v.to_string())))
            .collect()
    }

    /// One vector per tracker (informable then requestable) in the chosen
    /// representation. Requestable beliefs are the pair `[p, 1 - p]`.
    pub fn slot_vectors(&self, repr: BeliefRepr) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = match repr {
            BeliefRepr::Full => self.informable.clone(),
            BeliefRepr::Summary => self.informable.iter().map(|p| summarize_slot(p).to_vec()).collect(),
        };
        out.extend(self.requestable.iter().map(|&p| vec![p, 1.0 - p]));
        out
    }

    pub fn check(&self) -> Result<()> {
        for p in &self.informable {
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Dimension("informable belief is not a distribution".into()));
            }
        }
        if self.requestable.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Dimension("requestable belief outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Dimension of each tracker's vector under `repr`.
pub fn slot_dims(ontology: &Ontology, repr: BeliefRepr) -> Vec<usize> {
    let mut dims: Vec<usize> = (0..ontology.informable.0.len())
        .map(|i| match repr {
            BeliefRepr::Full => ontology.class_count(i),
            BeliefRepr::Summary => 3,
        })
        .collect();
    dims.extend(std::iter::repeat_n(2, ontology.requestable.len()));
    dims
}

/// `[sum of value probabilities, dontcare, not-mentioned]`.
pub fn summarize_slot(full: &[f64]) -> [f64; 3] {
    let k = full.len() - 2;
    [full[..k].iter().sum(), full[k], full[k + 1]]
}

/// Summary representation of every informable slot; requestables unchanged.
pub fn summarize(full: &BeliefState) -> BeliefState {
    BeliefState {
        informable: full.informable.iter().map(|p| summarize_slot(p).to_vec()).collect(),
        requestable: full.requestable.clone(),
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Unigram and bigram feature names, fixed after construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for FeatureMap {
    fn from(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        FeatureMap { names, index }
    }
}

impl From<FeatureMap> for Vec<String> {
    fn from(f: FeatureMap) -> Self {
        f.names
    }
}

fn ngrams(prefix: &str, tokens: &[String], out: &mut Vec<String>) {
    for (i, t) in tokens.iter().enumerate() {
        out.push(format!("{prefix}{t}"));
        if i + 1 < tokens.len() {
            out.push(format!("{prefix}{t} {}", tokens[i + 1]));
        }
    }
}

fn turn_ngrams(prev_sys: &[String], surface: &[String], delex: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    ngrams("s:", prev_sys, &mut out);
    ngrams("w:", surface, &mut out);
    ngrams("d:", delex, &mut out);
    out
}

/// Evidence extracted from one user turn.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnEvidence {
    pub features: Vec<usize>,
    /// Value classes mentioned in the surface text, per informable slot.
    pub mentions: Vec<Vec<usize>>,
}

/// Value classes of each informable slot mentioned in `surface`, by
/// longest match over values and their synonyms.
pub fn value_mentions(ontology: &Ontology, surface: &[String]) -> Vec<Vec<usize>> {
    let mut table: Vec<(Vec<String>, usize, usize)> = Vec::new();
    for (s, (_, values)) in ontology.informable.0.iter().enumerate() {
        for (k, v) in values.iter().enumerate() {
            table.push((tokenize(v), s, k));
            for syn in value_synonyms(v) {
                table.push((tokenize(syn), s, k));
            }
        }
    }
    let mut out = vec![Vec::new(); ontology.informable.0.len()];
    let mut i = 0;
    while i < surface.len() {
        let hit = table
            .iter()
            .filter(|(p, _, _)| surface[i..].starts_with(p))
            .max_by_key(|(p, _, _)| p.len());
        match hit {
            Some((p, s, k)) => {
                if !out[*s].contains(k) {
                    out[*s].push(*k);
                }
                i += p.len();
            }
            None => i += 1,
        }
    }
    out
}

impl FeatureMap {
    pub fn build(dialogues: &[Dialogue]) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for d in dialogues {
            for (i, t) in d.turns.iter().enumerate() {
                let prev: &[String] = if i == 0 { &[] } else { &d.turns[i - 1].sys };
                seen.extend(turn_ngrams(prev, &t.user_surface, &t.user));
            }
        }
        FeatureMap::from(seen.into_iter().collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Sorted, de-duplicated active feature indices; unseen n-grams dropped.
    pub fn features(&self, prev_sys: &[String], surface: &[String], delex: &[String]) -> Vec<usize> {
        let mut f: Vec<usize> = turn_ngrams(prev_sys, surface, delex)
            .iter()
            .filter_map(|g| self.index.get(g).copied())
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Weights of one informable tracker:
/// `logits = W f + U p_prev + a * mentions + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformableTracker {
    pub slot: String,
    /// `features x classes`, so one active feature touches one row.
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
    /// Tied weight of an explicit value mention.
    pub a: Tensor,
}

/// Weights of one requestable tracker: `p = sigmoid(w . f + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestableTracker {
    pub slot: String,
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerModel {
    pub version: u32,
    #[serde(rename = "featureMap")]
    pub features: FeatureMap,
    pub informable: Vec<InformableTracker>,
    pub requestable: Vec<RequestableTracker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerHyper {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_range: f64,
    pub seed: u64,
}

impl Default for TrackerHyper {
    fn default() -> Self {
        TrackerHyper {
            lr: 0.02,
            max_epochs: 30,
            patience: 3,
            init_range: 0.05,
            seed: 1,
        }
    }
}

impl TrackerModel {
    pub fn init(ontology: &Ontology, features: FeatureMap, init_range: f64, rng: &mut Rng) -> Self {
        let f = features.len();
        let informable = ontology
            .informable
            .0
            .iter()
            .enumerate()
            .map(|(i, (slot, _))| {
                let c = ontology.class_count(i);
                InformableTracker {
                    slot: slot.clone(),
                    w: Tensor::uniform(&[f, c], init_range, rng),
                    u: persistence_prior(c, init_range, rng),
                    b: Tensor::uniform(&[c], init_range, rng),
                    a: Tensor::uniform(&[1], init_range, rng),
                }
            })
            .collect();
        let requestable = ontology
            .requestable
            .iter()
            .map(|slot| RequestableTracker {
                slot: slot.clone(),
                w: Tensor::uniform(&[f], init_range, rng),
                b: Tensor::uniform(&[1], init_range, rng),
            })
            .collect();
        TrackerModel {
            version: TRACKER_VERSION,
            features,
            informable,
            requestable,
        }
    }

    pub fn evidence(
        &self,
        ontology: &Ontology,
        prev_sys: &[String],
        user_surface: &[String],
        user_delex: &[String],
    ) -> TurnEvidence {
        TurnEvidence {
            features: self.features.features(prev_sys, user_surface, user_delex),
            mentions: value_mentions(ontology, user_surface),
        }
    }

    /// Belief after one more user turn. `prev_sys` is the system response
    /// that preceded it (empty for the first turn).
    pub fn step(
        &self,
        ontology: &Ontology,
        prev: &BeliefState,
        prev_sys: &[String],
        user_surface: &[String],
        user_delex: &[String],
    ) -> BeliefState {
        let ev = self.evidence(ontology, prev_sys, user_surface, user_delex);
        self.step_evidence(prev, &ev)
    }

    pub fn step_evidence(&self, prev: &BeliefState, ev: &TurnEvidence) -> BeliefState {
        let informable = self
            .informable
            .iter()
            .zip(&prev.informable)
            .zip(&ev.mentions)
            .map(|((t, p), m)| {
                let mut logits = informable_logits(t, &ev.features, m, p);
                softmax_in_place(&mut logits);
                logits
            })
            .collect();
        let requestable = self
            .requestable
            .iter()
            .map(|t| sigmoid_scalar(requestable_logit(t, &ev.features)))
            .collect();
        BeliefState {
            informable,
            requestable,
        }
    }

    /// Beliefs after each turn of the dialogue (index `t` covers turns `0..=t`).
    pub fn track_dialogue(&self, ontology: &Ontology, turns: &[Turn]) -> Vec<BeliefState> {
        let mut state = BeliefState::initial(ontology);
        turns
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let prev_sys: &[String] = if i == 0 { &[] } else { &turns[i - 1].sys };
                state = self.step(ontology, &state, prev_sys, &t.user_surface, &t.user);
                state.clone()
            })
            .collect()
    }

    /// Hex SHA-256 of the serialised weights; used to prove the trackers
    /// are untouched by later training.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("tracker serialises");
        hex::encode(Sha256::digest(json))
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        if self.version != TRACKER_VERSION {
            return Err(Error::Checkpoint(format!("unsupported tracker version {}", self.version)));
        }
        if self.informable.len() != ontology.informable.0.len() || self.requestable.len() != ontology.requestable.len() {
            return Err(Error::Checkpoint("tracker slots do not match the ontology".into()));
        }
        let f = self.features.len();
        for (i, t) in self.informable.iter().enumerate() {
            let c = ontology.class_count(i);
            if t.w.shape() != [f, c] || t.u.shape() != [c, c] || t.b.shape() != [c] || t.a.shape() != [1] {
                return Err(Error::Checkpoint(format!("tracker {} has wrong shapes", t.slot)));
            }
        }
        for t in &self.requestable {
            if t.w.shape() != [f] || t.b.shape() != [1] {
                return Err(Error::Checkpoint(format!("tracker {} has wrong shapes", t.slot)));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Scaled identity plus noise: a belief carries over unless a turn's
/// features outweigh it.
fn persistence_prior(c: usize, init_range: f64, rng: &mut Rng) -> Tensor {
    let mut u = Tensor::uniform(&[c, c], init_range, rng);
    for k in 0..c {
        u.data_mut()[k * c + k] += PERSISTENCE;
    }
    u
}

const PERSISTENCE: f64 = 4.0;

fn informable_logits(t: &InformableTracker, feats: &[usize], mentions: &[usize], prev: &[f64]) -> Vec<f64> {
    let c = t.b.len();
    let mut logits = t.b.data().to_vec();
    for &k in mentions {
        logits[k] += t.a.data()[0];
    }
    for &f in feats {
        for (l, w) in logits.iter_mut().zip(t.w.row(f)) {
            *l += w;
        }
    }
    crate::numerics::matvec_acc(t.u.data(), c, prev, &mut logits);
    logits
}

fn requestable_logit(t: &RequestableTracker, feats: &[usize]) -> f64 {
    t.b.data()[0] + feats.iter().map(|&f| t.w.data()[f]).sum::<f64>()
}

struct Encoded {
    evidence: Vec<TurnEvidence>,
    /// Gold class per informable slot, per turn.
    inform: Vec<Vec<usize>>,
    /// Gold 0/1 per requestable slot, per turn.
    request: Vec<Vec<f64>>,
}

fn encode(model: &TrackerModel, ontology: &Ontology, d: &Dialogue) -> Result<Encoded> {
    let mut enc = Encoded {
        evidence: Vec::new(),
        inform: Vec::new(),
        request: Vec::new(),
    };
    for (i, t) in d.turns.iter().enumerate() {
        let prev_sys: &[String] = if i == 0 { &[] } else { &d.turns[i - 1].sys };
        enc.evidence.push(model.evidence(ontology, prev_sys, &t.user_surface, &t.user));
        let mut classes = Vec::new();
        for (slot, values) in &ontology.informable.0 {
            let label = t.labels.informable.get(slot).cloned().unwrap_or(InformLabel::NotMentioned);
            let class = label
                .class_index(values)
                .ok_or_else(|| Error::Config(format!("label {label:?} not in slot {slot}")))?;
            classes.push(class);
        }
        enc.inform.push(classes);
        enc.request.push(
            ontology
                .requestable
                .iter()
                .map(|s| f64::from(t.labels.requestable.get(s).copied().unwrap_or(0)))
                .collect(),
        );
    }
    Ok(enc)
}

const CLAMP: f64 = crate::numerics::ops::CLAMP_EPS;

/// Summed cross-entropy of a dialogue (all slots, all turns).
fn dialogue_loss(model: &TrackerModel, ontology: &Ontology, enc: &Encoded) -> f64 {
    let mut state = BeliefState::initial(ontology);
    let mut loss = 0.0;
    for (t, ev) in enc.evidence.iter().enumerate() {
        state = model.step_evidence(&state, ev);
        for (s, p) in state.informable.iter().enumerate() {
            loss -= p[enc.inform[t][s]].max(CLAMP).ln();
        }
        for (s, &p) in state.requestable.iter().enumerate() {
            loss += crate::numerics::ops::bce_scalar(enc.request[t][s], p, CLAMP);
        }
    }
    loss
}

/// One SGD step on a dialogue with back-propagation through turns.
fn sgd_dialogue(model: &mut TrackerModel, ontology: &Ontology, enc: &Encoded, lr: f64) {
    let n_turns = enc.evidence.len();
    for (s, tracker) in model.informable.iter_mut().enumerate() {
        let c = tracker.b.len();
        // Forward, keeping every belief.
        let mut beliefs = vec![BeliefState::initial(ontology).informable[s].clone()];
        for ev in &enc.evidence {
            let mut p = informable_logits(tracker, &ev.features, &ev.mentions[s], beliefs.last().unwrap());
            softmax_in_place(&mut p);
            beliefs.push(p);
        }
        let mut du = vec![0.0; c * c];
        let mut db = vec![0.0; c];
        let mut dp_next = vec![0.0; c];
        for t in (0..n_turns).rev() {
            let p = &beliefs[t + 1];
            // Softmax backward of the recurrent gradient, plus p - onehot
            // from this turn's cross-entropy.
            let dot: f64 = p.iter().zip(&dp_next).map(|(a, b)| a * b).sum();
            let mut dlogits: Vec<f64> = (0..c).map(|k| p[k] * (dp_next[k] - dot) + p[k]).collect();
            dlogits[enc.inform[t][s]] -= 1.0;
            crate::numerics::axpy(1.0, &dlogits, &mut db);
            // W is not needed for the rest of the backward pass.
            for &f in &enc.evidence[t].features {
                crate::numerics::axpy(-lr, &dlogits, tracker.w.row_mut(f));
            }
            let da: f64 = enc.evidence[t].mentions[s].iter().map(|&k| dlogits[k]).sum();
            tracker.a.data_mut()[0] -= lr * da;
            let prev = &beliefs[t];
            crate::numerics::outer_acc(&dlogits, prev, &mut du);
            let mut dprev = vec![0.0; c];
            crate::numerics::matvec_t_acc(tracker.u.data(), c, &dlogits, &mut dprev);
            dp_next = dprev;
        }
        crate::numerics::axpy(-lr, &du, tracker.u.data_mut());
        crate::numerics::axpy(-lr, &db, tracker.b.data_mut());
    }
    for (s, tracker) in model.requestable.iter_mut().enumerate() {
        for t in 0..n_turns {
            let p = sigmoid_scalar(requestable_logit(tracker, &enc.evidence[t].features));
            let g = p - enc.request[t][s];
            for &f in &enc.evidence[t].features {
                tracker.w.data_mut()[f] -= lr * g;
            }
            tracker.b.data_mut()[0] -= lr * g;
        }
    }
}

/// Stage-1 training: summed cross-entropy over all trackers, plain SGD per
/// dialogue, early stopping on validation loss.
pub fn train_trackers(
    ontology: &Ontology,
    train: &[Dialogue],
    valid: &[Dialogue],
    hyper: &TrackerHyper,
) -> Result<TrackerModel> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config("tracker training needs non-empty train and valid splits".into()));
    }
    let mut rng = Rng::substream(hyper.seed, 0x7a);
    let mut model = TrackerModel::init(ontology, FeatureMap::build(train), hyper.init_range, &mut rng);
    let train_enc: Vec<Encoded> = train.iter().map(|d| encode(&model, ontology, d)).collect::<Result<_>>()?;
    let valid_enc: Vec<Encoded> = valid.iter().map(|d| encode(&model, ontology, d)).collect::<Result<_>>()?;
    let valid_loss = |m: &TrackerModel| valid_enc.iter().map(|e| dialogue_loss(m, ontology, e)).sum::<f64>();

    let mut best = model.clone();
    let mut best_loss = valid_loss(&model);
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    for _ in 0..hyper.max_epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            sgd_dialogue(&mut model, ontology, &train_enc[i], hyper.lr);
        }
        let loss = valid_loss(&model);
        if !loss.is_finite() {
            return Err(Error::Training("tracker validation loss is not finite".into()));
        }
        if loss < best_loss {
            best_loss = loss;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// Per-tracker top-1 accuracy over every turn (requestables thresholded
/// at 0.5), in tracker order.
pub fn tracker_accuracy(model: &TrackerModel, ontology: &Ontology, dialogues: &[Dialogue]) -> Vec<f64> {
    let n_inf = ontology.informable.0.len();
    let mut correct = vec![0usize; n_inf + ontology.requestable.len()];
    let mut total = 0usize;
    for d in dialogues {
        for (t, b) in d.turns.iter().zip(model.track_dialogue(ontology, &d.turns)) {
            total += 1;
            for (s, label) in b.top_labels(ontology).iter().enumerate() {
                let gold = t.labels.informable.get(&ontology.informable.0[s].0);
                if gold == Some(label) {
                    correct[s] += 1;
                }
            }
            for (s, slot) in ontology.requestable.iter().enumerate() {
                let gold = t.labels.requestable.get(slot).copied().unwrap_or(0) == 1;
                if (b.requestable[s] >= 0.5) == gold {
                    correct[n_inf + s] += 1;
                }
            }
        }
    }
    correct.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
}
