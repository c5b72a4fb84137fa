//! The full generation model: intent network, policy and decoder, with the
//! per-turn loss of token cross-entropy plus the weighted snapshot term.

use crate::corpus::{Database, Dialogue, Ontology, Vocabulary};
use crate::decoder::{DecoderParams, StepCache};
use crate::encoder::{db_query, AttentionStep, IntentCache, IntentNet, Policy, PolicyTurn, DB_BINS};
use crate::error::{Error, Result};
use crate::numerics::{axpy, grad_check_with, GradCheckReport, ParamSet, Parameter, Rng, Stencil};
use crate::snapshot::{label_snapshots, step_loss, step_loss_backward, IndicatorSpec};
use crate::tracker::{slot_dims, BeliefState, TrackerModel};
use crate::training::TrainConfig;

/// Trainable parameters plus everything needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub spec: IndicatorSpec,
    pub tracker_names: Vec<String>,
    pub intent: IntentNet,
    pub policy: Policy,
    pub decoder: DecoderParams,
}

impl ParamSet for Model {
    fn params(&self) -> Vec<&Parameter> {
        let mut v = self.intent.params();
        v.extend(self.policy.params());
        v.extend(self.decoder.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.intent.params_mut();
        v.extend(self.policy.params_mut());
        v.extend(self.decoder.params_mut());
        v
    }
}

/// Tracker-side inputs of one turn. Trackers are frozen during generator
/// training, so these are computed once per corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnInput {
    pub user: Vec<usize>,
    pub x: Vec<f64>,
    pub bin: usize,
    pub pointer: Option<String>,
    pub beliefs: Vec<Vec<f64>>,
    pub belief: BeliefState,
    /// Gold response ids ending with end-of-sentence; empty at inference.
    pub sys: Vec<usize>,
    /// Per-step snapshot targets aligned with `sys`.
    pub targets: Vec<Vec<f64>>,
}

/// Loss components of one turn.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TurnLoss {
    pub token: f64,
    pub snapshot: f64,
    pub steps: usize,
}

impl TurnLoss {
    pub fn add(&mut self, other: TurnLoss) {
        self.token += other.token;
        self.snapshot += other.snapshot;
        self.steps += other.steps;
    }

    /// `token + lambda * snapshot`, or just the token term.
    pub fn total(&self, config: &TrainConfig) -> f64 {
        if config.snapshot {
            self.token + config.lambda * self.snapshot
        } else {
            self.token
        }
    }
}

/// Conditioning state that does not depend on the generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnContext {
    pub z: Vec<f64>,
    pub intent: IntentCache,
    pub policy: PolicyTurn,
    /// `m` for non-attentive models.
    pub fixed: Option<Vec<f64>>,
}

/// Decoder state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub prev: usize,
}

/// One generation step with everything analysis and backward need.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub input_token: usize,
    pub attention: Option<AttentionStep>,
    pub m: Vec<f64>,
    pub cell: StepCache,
    pub dist: Vec<f64>,
}

/// Teacher-forced pass over one turn.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnTrace {
    pub context: TurnContext,
    pub steps: Vec<StepRecord>,
    /// Log-probability of each gold token.
    pub log_probs: Vec<f64>,
    pub loss: TurnLoss,
}

impl Model {
    pub fn init(config: &TrainConfig, vocab: Vocabulary, ontology: &Ontology) -> Result<Self> {
        config.validate()?;
        let spec = IndicatorSpec::for_ontology(ontology);
        if config.snapshot && spec.len() > config.hidden {
            return Err(Error::Config(format!(
                "snapshot needs at least {} hidden units, got {}",
                spec.len(),
                config.hidden
            )));
        }
        let mut rng = Rng::new(config.seed);
        let n = config.hidden;
        let v = vocab.len();
        let range = config.init_range;
        let tracker_names = ontology.tracker_names();
        let intent = IntentNet::init(n, v, range, &mut rng);
        let policy = Policy::init(
            n,
            &slot_dims(ontology, config.belief),
            &tracker_names,
            config.attention,
            range,
            &mut rng,
        );
        let decoder = DecoderParams::init(config.variant, n, v, range, &mut rng);
        Ok(Model {
            config: config.clone(),
            vocab,
            spec,
            tracker_names,
            intent,
            policy,
            decoder,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn eos(&self) -> usize {
        self.vocab.eos()
    }

    /// Intent encoding and policy precomputation for a turn.
    pub fn context(&self, input: &TurnInput) -> Result<TurnContext> {
        let (z, intent) = self.intent.encode(&input.user, self.eos());
        let policy = self.policy.prepare(&z, &input.x, &input.beliefs)?;
        let fixed = (!self.config.attention).then(|| self.policy.fixed(&policy));
        Ok(TurnContext {
            z,
            intent,
            policy,
            fixed,
        })
    }

    pub fn start_state(&self) -> DecodeState {
        let n = self.hidden();
        DecodeState {
            h: vec![0.0; n],
            c: vec![0.0; n],
            prev: self.eos(),
        }
    }

    /// One decoder step from `state`, feeding `state.prev`.
    pub fn advance(&self, ctx: &TurnContext, state: &DecodeState) -> StepRecord {
        let w = self.decoder.embedding(state.prev);
        let (attention, m) = match &ctx.fixed {
            Some(m) => (None, m.clone()),
            None => {
                let a = self.policy.attend(&ctx.policy, w, &state.h);
                let m = a.m.clone();
                (Some(a), m)
            }
        };
        let cell = self.decoder.step(&m, w, &state.h, &state.c);
        let dist = self.decoder.output_dist(&cell.h);
        StepRecord {
            input_token: state.prev,
            attention,
            m,
            cell,
            dist,
        }
    }

    /// Feed `tokens` one by one and record every step.
    pub fn replay(&self, ctx: &TurnContext, tokens: &[usize]) -> Vec<StepRecord> {
        let mut state = self.start_state();
        tokens
            .iter()
            .map(|&t| {
                let rec = self.advance(ctx, &state);
                state = DecodeState {
                    h: rec.cell.h.clone(),
                    c: rec.cell.c.clone(),
                    prev: t,
                };
                rec
            })
            .collect()
    }

    /// Teacher-forced forward over the gold response of `input`.
    pub fn forward(&self, input: &TurnInput) -> Result<TurnTrace> {
        if input.sys.is_empty() {
            return Err(Error::Alignment("turn has no gold response".into()));
        }
        if self.config.snapshot && input.targets.len() != input.sys.len() {
            return Err(Error::Alignment(format!(
                "{} snapshot targets for {} steps",
                input.targets.len(),
                input.sys.len()
            )));
        }
        let context = self.context(input)?;
        let d = self.spec.len();
        let mut state = self.start_state();
        let mut steps = Vec::with_capacity(input.sys.len());
        let mut log_probs = Vec::with_capacity(input.sys.len());
        let mut loss = TurnLoss::default();
        for (j, &target) in input.sys.iter().enumerate() {
            let rec = self.advance(&context, &state);
            let lp = rec.dist[target].max(f64::MIN_POSITIVE).ln();
            log_probs.push(lp);
            loss.token -= lp;
            if self.config.snapshot {
                loss.snapshot += step_loss(&rec.m[..d], &input.targets[j]);
            }
            state = DecodeState {
                h: rec.cell.h.clone(),
                c: rec.cell.c.clone(),
                prev: target,
            };
            steps.push(rec);
        }
        loss.steps = steps.len();
        if !loss.token.is_finite() || !loss.snapshot.is_finite() {
            return Err(Error::NonFinite("turn loss".into()));
        }
        Ok(TurnTrace {
            context,
            steps,
            log_probs,
            loss,
        })
    }

    /// Forward plus backward for one turn; gradients accumulate into the
    /// parameters.
    pub fn turn_loss(&mut self, input: &TurnInput) -> Result<TurnLoss> {
        let trace = self.forward(input)?;
        self.backward(input, &trace);
        Ok(trace.loss)
    }

    fn backward(&mut self, input: &TurnInput, trace: &TurnTrace) {
        let n = self.hidden();
        let d = self.spec.len();
        let snap_scale = if self.config.snapshot { self.config.lambda } else { 0.0 };
        let ctx = &trace.context;
        let mut acc = self.policy.turn_grads(&ctx.policy);
        let mut dm_fixed = vec![0.0; n];
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        for (j, rec) in trace.steps.iter().enumerate().rev() {
            let mut dh = self.decoder.output_backward(&rec.cell.h, &rec.dist, input.sys[j]);
            axpy(1.0, &dh_next, &mut dh);
            let g = self.decoder.step_backward(&rec.cell, &dh, &dc_next);
            let mut dm = g.dm;
            if snap_scale != 0.0 {
                step_loss_backward(&rec.m[..d], &input.targets[j], snap_scale, &mut dm[..d]);
            }
            let h_prev = &rec.cell.input[2 * n..];
            let mut dw = g.dw;
            let mut dh_prev = g.dh_prev;
            match &rec.attention {
                Some(att) => {
                    let w = self.decoder.emb.value.row(rec.input_token).to_vec();
                    let ag = self.policy.attend_backward(&ctx.policy, att, &w, h_prev, &dm, &mut acc);
                    axpy(1.0, &ag.dw, &mut dw);
                    axpy(1.0, &ag.dh_prev, &mut dh_prev);
                }
                None => axpy(1.0, &dm, &mut dm_fixed),
            }
            axpy(1.0, &dw, self.decoder.emb.grad_mut().row_mut(rec.input_token));
            dh_next = dh_prev;
            dc_next = g.dc_prev;
        }
        if let Some(m) = &ctx.fixed {
            self.policy.fixed_backward(m, &dm_fixed, &mut acc);
        }
        let dz = self.policy.finish_turn(&ctx.policy, &acc);
        self.intent.backward(&ctx.intent, &dz);
    }

    /// Finite-difference check of the full loss over `inputs` using the
    /// four-point central stencil at step `eps`.
    pub fn gradient_report(&mut self, inputs: &[TurnInput], eps: f64) -> GradCheckReport {
        let config = self.config.clone();
        grad_check_with(self, eps, usize::MAX, Stencil::FourPoint, |m: &mut Model, acc| {
            inputs
                .iter()
                .map(|t| {
                    let loss = if acc { m.turn_loss(t) } else { m.forward(t).map(|t| t.loss) };
                    loss.expect("turn loss").total(&config)
                })
                .sum()
        })
    }

    /// Log-likelihood of every gold token of the given turns.
    pub fn log_likelihood(&self, inputs: &[TurnInput]) -> Result<f64> {
        let mut total = 0.0;
        for input in inputs {
            total += self.forward(input)?.log_probs.iter().sum::<f64>();
        }
        Ok(total)
    }
}

/// Frozen trackers, ontology and database shared by every pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub ontology: Ontology,
    pub database: Database,
    pub trackers: TrackerModel,
}

impl World {
    /// Tracker and database inputs for every turn of a gold dialogue.
    /// `rng` only drives entity pointer sampling.
    pub fn prepare(&self, model: &Model, dialogue: &Dialogue, rng: &mut Rng) -> Vec<TurnInput> {
        let beliefs = self.trackers.track_dialogue(&self.ontology, &dialogue.turns);
        let targets = label_snapshots(dialogue, &model.spec, model.config.attention);
        let mut pointer: Option<String> = None;
        dialogue
            .turns
            .iter()
            .zip(beliefs)
            .zip(targets)
            .map(|((turn, belief), targets)| {
                let db = db_query(&belief, &self.ontology, &self.database, rng, pointer.as_deref());
                pointer = db.pointer.clone();
                TurnInput {
                    user: model.vocab.ids(&turn.user),
                    x: db.x,
                    bin: db.bin,
                    pointer: db.pointer,
                    beliefs: belief.slot_vectors(model.config.belief),
                    belief,
                    sys: model.vocab.ids(&turn.sys),
                    targets,
                }
            })
            .collect()
    }

    /// Inputs for a live turn given the previous belief and system response.
    pub fn live_turn(
        &self,
        model: &Model,
        prev: &BeliefState,
        prev_sys: &[String],
        surface: &[String],
        delex: &[String],
        pointer: Option<&str>,
        rng: &mut Rng,
    ) -> TurnInput {
        let belief = self.trackers.step(&self.ontology, prev, prev_sys, surface, delex);
        let db = db_query(&belief, &self.ontology, &self.database, rng, pointer);
        debug_assert_eq!(db.x.len(), DB_BINS);
        TurnInput {
            user: model.vocab.ids(delex),
            x: db.x,
            bin: db.bin,
            pointer: db.pointer,
            beliefs: belief.slot_vectors(model.config.belief),
            belief,
            sys: Vec::new(),
            targets: Vec::new(),
        }
    }
}
