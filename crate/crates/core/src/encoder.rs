//! Intent network, database operator and the policy network that fuses
//! them with the belief state into the conditioning vector.

use serde::{Deserialize, Serialize};

use crate::corpus::{Database, InformLabel, Ontology};
use crate::error::{Error, Result};
use crate::numerics::{
    axpy, dot, matvec, matvec_acc, matvec_t_acc, outer_acc, sigmoid_scalar, softmax_in_place, Parameter, Rng, Tensor,
};
use crate::tracker::BeliefState;

/// Number of database match bins: 0, 1, 2, 3, 4 and 5 or more.
pub const DB_BINS: usize = 6;

/// Standard LSTM sentence encoder with biases; gate rows `(i, f, o, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentNet {
    pub hidden: usize,
    pub emb: Parameter,
    pub w: Parameter,
    pub b: Parameter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentCache {
    tokens: Vec<usize>,
    steps: Vec<IntentStep>,
}

#[derive(Debug, Clone, PartialEq)]
struct IntentStep {
    input: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl IntentNet {
    pub fn init(hidden: usize, vocab: usize, range: f64, rng: &mut Rng) -> Self {
        let n = hidden;
        IntentNet {
            hidden,
            emb: Parameter::new("intent.emb", Tensor::uniform(&[vocab, n], range, rng)),
            w: Parameter::new("intent.w", Tensor::uniform(&[4 * n, 2 * n], range, rng)),
            b: Parameter::new("intent.b", Tensor::uniform(&[4 * n], range, rng)),
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.emb, &self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.emb, &mut self.w, &mut self.b]
    }

    /// Last hidden state over `tokens`; an empty list reads `eos` once.
    pub fn encode(&self, tokens: &[usize], eos: usize) -> (Vec<f64>, IntentCache) {
        let n = self.hidden;
        let tokens: Vec<usize> = if tokens.is_empty() { vec![eos] } else { tokens.to_vec() };
        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut steps = Vec::with_capacity(tokens.len());
        for &t in &tokens {
            let mut input = Vec::with_capacity(2 * n);
            input.extend_from_slice(self.emb.value.row(t));
            input.extend_from_slice(&h);
            let mut pre = self.b.value.data().to_vec();
            matvec_acc(self.w.value.data(), 2 * n, &input, &mut pre);
            let i: Vec<f64> = pre[..n].iter().map(|&x| sigmoid_scalar(x)).collect();
            let f: Vec<f64> = pre[n..2 * n].iter().map(|&x| sigmoid_scalar(x)).collect();
            let o: Vec<f64> = pre[2 * n..3 * n].iter().map(|&x| sigmoid_scalar(x)).collect();
            let g: Vec<f64> = pre[3 * n..].iter().map(|x| x.tanh()).collect();
            let c_prev = c.clone();
            for k in 0..n {
                c[k] = f[k] * c[k] + i[k] * g[k];
            }
            let tanh_c: Vec<f64> = c.iter().map(|x| x.tanh()).collect();
            for k in 0..n {
                h[k] = o[k] * tanh_c[k];
            }
            steps.push(IntentStep {
                input,
                i,
                f,
                o,
                g,
                c_prev,
                tanh_c,
            });
        }
        (h, IntentCache { tokens, steps })
    }

    /// Back-propagate `dz` (gradient on the final hidden state).
    pub fn backward(&mut self, cache: &IntentCache, dz: &[f64]) {
        let n = self.hidden;
        let mut dh = dz.to_vec();
        let mut dc = vec![0.0; n];
        for (step, &tok) in cache.steps.iter().zip(&cache.tokens).rev() {
            let mut dpre = vec![0.0; 4 * n];
            for k in 0..n {
                let t = step.tanh_c[k];
                let dct = dc[k] + dh[k] * step.o[k] * (1.0 - t * t);
                let (i, f, o, g) = (step.i[k], step.f[k], step.o[k], step.g[k]);
                dpre[k] = dct * g * i * (1.0 - i);
                dpre[n + k] = dct * step.c_prev[k] * f * (1.0 - f);
                dpre[2 * n + k] = dh[k] * t * o * (1.0 - o);
                dpre[3 * n + k] = dct * i * (1.0 - g * g);
                dc[k] = dct * f;
            }
            let mut dinput = vec![0.0; 2 * n];
            {
                let (w, gw) = self.w.split();
                outer_acc(&dpre, &step.input, gw.data_mut());
                matvec_t_acc(w.data(), 2 * n, &dpre, &mut dinput);
            }
            axpy(1.0, &dpre, self.b.grad_mut().data_mut());
            axpy(1.0, &dinput[..n], self.emb.grad_mut().row_mut(tok));
            dh = dinput[n..].to_vec();
        }
    }
}

/// Outcome of a database lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbResult {
    /// One-hot match-count bin.
    pub x: Vec<f64>,
    pub bin: usize,
    pub matches: Vec<String>,
    pub pointer: Option<String>,
}

/// Bin index for a match count.
pub fn match_bin(count: usize) -> usize {
    count.min(DB_BINS - 1)
}

/// Query the database with the argmax of each informable belief.
///
/// Dontcare and not-mentioned leave a slot unconstrained. The previous
/// pointer is kept while it still matches; otherwise a new one is drawn
/// uniformly from the matches.
pub fn db_query(
    belief: &BeliefState,
    ontology: &Ontology,
    database: &Database,
    rng: &mut Rng,
    previous: Option<&str>,
) -> DbResult {
    let constraints: Vec<(String, Option<String>)> = ontology
        .informable_slots()
        .zip(belief.top_labels(ontology))
        .map(|(s, l)| {
            let v = match l {
                InformLabel::Value(v) => Some(v),
                _ => None,
            };
            (s.to_string(), v)
        })
        .collect();
    let matches: Vec<String> = database.query(&constraints).into_iter().map(|e| e.name.clone()).collect();
    let bin = match_bin(matches.len());
    let mut x = vec![0.0; DB_BINS];
    x[bin] = 1.0;
    let pointer = match previous {
        Some(p) if matches.iter().any(|m| m == p) => Some(p.to_string()),
        _ if matches.is_empty() => None,
        _ => Some(rng.pick(&matches).clone()),
    };
    DbResult {
        x,
        bin,
        matches,
        pointer,
    }
}

/// Attention extension of the policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Projects the match vector to `n` so that `v = z + P_x x`.
    pub p_x: Parameter,
    pub w_rv: Parameter,
    pub w_rp: Vec<Parameter>,
    pub w_rw: Parameter,
    pub w_rh: Parameter,
    pub r: Parameter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub hidden: usize,
    pub w_zm: Parameter,
    pub w_xm: Parameter,
    /// One matrix per tracker, informable then requestable.
    pub w_pm: Vec<Parameter>,
    pub attention: Option<AttentionParams>,
}

/// Per-turn quantities shared by every generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTurn {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub beliefs: Vec<Vec<f64>>,
    /// `W_zm z + W_xm x`.
    base: Vec<f64>,
    /// `W_pm^s p^s` per tracker.
    slot_terms: Vec<Vec<f64>>,
    /// `v = z + P_x x` (attention only).
    v: Vec<f64>,
    /// `W_rv v + W_rp^s p^s` per tracker (attention only).
    att_slot: Vec<Vec<f64>>,
}

/// One attentive policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStep {
    pub alpha: Vec<f64>,
    /// `tanh(att_slot[s] + q)` per tracker.
    t: Vec<Vec<f64>>,
    pub m: Vec<f64>,
}

/// Gradients flowing out of the policy to the decoder side.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub dw: Vec<f64>,
    pub dh_prev: Vec<f64>,
}

/// Gradient accumulators for one turn's policy backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTurnGrads {
    dpre_base: Vec<f64>,
    dslot: Vec<Vec<f64>>,
    datt: Vec<Vec<f64>>,
}

impl Policy {
    pub fn init(hidden: usize, slot_dims: &[usize], names: &[String], attention: bool, range: f64, rng: &mut Rng) -> Self {
        let n = hidden;
        let w_zm = Parameter::new("policy.w_zm", Tensor::uniform(&[n, n], range, rng));
        let w_xm = Parameter::new("policy.w_xm", Tensor::uniform(&[n, DB_BINS], range, rng));
        let w_pm = slot_dims
            .iter()
            .zip(names)
            .map(|(&d, name)| Parameter::new(format!("policy.w_pm.{name}"), Tensor::uniform(&[n, d], range, rng)))
            .collect();
        let attention = attention.then(|| AttentionParams {
            p_x: Parameter::new("att.p_x", Tensor::uniform(&[n, DB_BINS], range, rng)),
            w_rv: Parameter::new("att.w_rv", Tensor::uniform(&[n, n], range, rng)),
            w_rp: slot_dims
                .iter()
                .zip(names)
                .map(|(&d, name)| Parameter::new(format!("att.w_rp.{name}"), Tensor::uniform(&[n, d], range, rng)))
                .collect(),
            w_rw: Parameter::new("att.w_rw", Tensor::uniform(&[n, n], range, rng)),
            w_rh: Parameter::new("att.w_rh", Tensor::uniform(&[n, n], range, rng)),
            r: Parameter::new("att.r", Tensor::uniform(&[n], range, rng)),
        });
        Policy {
            hidden,
            w_zm,
            w_xm,
            w_pm,
            attention,
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.w_zm, &self.w_xm];
        v.extend(self.w_pm.iter());
        if let Some(a) = &self.attention {
            v.push(&a.p_x);
            v.push(&a.w_rv);
            v.extend(a.w_rp.iter());
            v.push(&a.w_rw);
            v.push(&a.w_rh);
            v.push(&a.r);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.w_zm, &mut self.w_xm];
        v.extend(self.w_pm.iter_mut());
        if let Some(a) = &mut self.attention {
            v.push(&mut a.p_x);
            v.push(&mut a.w_rv);
            v.extend(a.w_rp.iter_mut());
            v.push(&mut a.w_rw);
            v.push(&mut a.w_rh);
            v.push(&mut a.r);
        }
        v
    }

    /// Precompute everything that does not depend on the generation step.
    pub fn prepare(&self, z: &[f64], x: &[f64], beliefs: &[Vec<f64>]) -> Result<PolicyTurn> {
        let n = self.hidden;
        if beliefs.len() != self.w_pm.len() {
            return Err(Error::dim(format!(
                "{} belief vectors for {} trackers",
                beliefs.len(),
                self.w_pm.len()
            )));
        }
        if z.len() != n || x.len() != DB_BINS {
            return Err(Error::dim("intent or match vector has the wrong length"));
        }
        let mut base = vec![0.0; n];
        matvec(self.w_zm.value.data(), n, z, &mut base);
        matvec_acc(self.w_xm.value.data(), DB_BINS, x, &mut base);
        let mut slot_terms = Vec::with_capacity(beliefs.len());
        for (w, p) in self.w_pm.iter().zip(beliefs) {
            if w.value.cols() != p.len() {
                return Err(Error::dim(format!("{} expects {} inputs, got {}", w.name, w.value.cols(), p.len())));
            }
            let mut t = vec![0.0; n];
            matvec(w.value.data(), p.len(), p, &mut t);
            slot_terms.push(t);
        }
        let (v, att_slot) = match &self.attention {
            None => (Vec::new(), Vec::new()),
            Some(a) => {
                let mut v = z.to_vec();
                matvec_acc(a.p_x.value.data(), DB_BINS, x, &mut v);
                let mut shared = vec![0.0; n];
                matvec(a.w_rv.value.data(), n, &v, &mut shared);
                let att_slot = a
                    .w_rp
                    .iter()
                    .zip(beliefs)
                    .map(|(w, p)| {
                        let mut t = shared.clone();
                        matvec_acc(w.value.data(), p.len(), p, &mut t);
                        t
                    })
                    .collect();
                (v, att_slot)
            }
        };
        Ok(PolicyTurn {
            z: z.to_vec(),
            x: x.to_vec(),
            beliefs: beliefs.to_vec(),
            base,
            slot_terms,
            v,
            att_slot,
        })
    }

    /// `m = tanh(W_zm z + W_xm x + sum_s W_pm^s p^s)`.
    pub fn fixed(&self, turn: &PolicyTurn) -> Vec<f64> {
        let mut pre = turn.base.clone();
        for t in &turn.slot_terms {
            axpy(1.0, t, &mut pre);
        }
        pre.iter().map(|x| x.tanh()).collect()
    }

    /// Attention weights over trackers and the step's conditioning vector.
    pub fn attend(&self, turn: &PolicyTurn, w: &[f64], h_prev: &[f64]) -> AttentionStep {
        let n = self.hidden;
        let a = self.attention.as_ref().expect("attentive policy");
        let mut q = vec![0.0; n];
        matvec(a.w_rw.value.data(), n, w, &mut q);
        matvec_acc(a.w_rh.value.data(), n, h_prev, &mut q);
        let mut t = Vec::with_capacity(turn.att_slot.len());
        let mut alpha = Vec::with_capacity(turn.att_slot.len());
        for s in &turn.att_slot {
            let ts: Vec<f64> = s.iter().zip(&q).map(|(a, b)| (a + b).tanh()).collect();
            alpha.push(dot(a.r.value.data(), &ts));
            t.push(ts);
        }
        softmax_in_place(&mut alpha);
        let mut pre = turn.base.clone();
        for (al, term) in alpha.iter().zip(&turn.slot_terms) {
            axpy(*al, term, &mut pre);
        }
        AttentionStep {
            alpha,
            t,
            m: pre.iter().map(|x| x.tanh()).collect(),
        }
    }

    pub fn turn_grads(&self, turn: &PolicyTurn) -> PolicyTurnGrads {
        let n = self.hidden;
        PolicyTurnGrads {
            dpre_base: vec![0.0; n],
            dslot: vec![vec![0.0; n]; turn.slot_terms.len()],
            datt: vec![vec![0.0; n]; turn.att_slot.len()],
        }
    }

    /// Backward of [`Policy::fixed`] given `dm`.
    pub fn fixed_backward(&self, m: &[f64], dm: &[f64], acc: &mut PolicyTurnGrads) {
        for k in 0..self.hidden {
            let g = dm[k] * (1.0 - m[k] * m[k]);
            acc.dpre_base[k] += g;
            for d in acc.dslot.iter_mut() {
                d[k] += g;
            }
        }
    }

    /// Backward of [`Policy::attend`] given `dm`; accumulates parameter
    /// gradients for `W_rw`, `W_rh`, `r` and returns gradients on the step
    /// inputs.
    pub fn attend_backward(
        &mut self,
        turn: &PolicyTurn,
        step: &AttentionStep,
        w: &[f64],
        h_prev: &[f64],
        dm: &[f64],
        acc: &mut PolicyTurnGrads,
    ) -> AttentionGrads {
        let n = self.hidden;
        let dpre: Vec<f64> = (0..n).map(|k| dm[k] * (1.0 - step.m[k] * step.m[k])).collect();
        axpy(1.0, &dpre, &mut acc.dpre_base);
        let mut dalpha = Vec::with_capacity(step.alpha.len());
        for (s, term) in turn.slot_terms.iter().enumerate() {
            axpy(step.alpha[s], &dpre, &mut acc.dslot[s]);
            dalpha.push(dot(&dpre, term));
        }
        let mean: f64 = step.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let a = self.attention.as_mut().expect("attentive policy");
        let mut dq = vec![0.0; n];
        for (s, ts) in step.t.iter().enumerate() {
            let dscore = step.alpha[s] * (dalpha[s] - mean);
            if dscore == 0.0 {
                continue;
            }
            axpy(dscore, ts, a.r.grad_mut().data_mut());
            let r = a.r.value.data();
            for k in 0..n {
                let du = dscore * r[k] * (1.0 - ts[k] * ts[k]);
                acc.datt[s][k] += du;
                dq[k] += du;
            }
        }
        let mut dw = vec![0.0; n];
        let mut dh_prev = vec![0.0; n];
        {
            let (wv, g) = a.w_rw.split();
            outer_acc(&dq, w, g.data_mut());
            matvec_t_acc(wv.data(), n, &dq, &mut dw);
        }
        {
            let (wv, g) = a.w_rh.split();
            outer_acc(&dq, h_prev, g.data_mut());
            matvec_t_acc(wv.data(), n, &dq, &mut dh_prev);
        }
        AttentionGrads { dw, dh_prev }
    }

    /// Finish a turn: push the accumulated per-turn gradients into the
    /// parameters and return the gradient on `z`.
    pub fn finish_turn(&mut self, turn: &PolicyTurn, acc: &PolicyTurnGrads) -> Vec<f64> {
        let n = self.hidden;
        let mut dz = vec![0.0; n];
        {
            let (w, g) = self.w_zm.split();
            outer_acc(&acc.dpre_base, &turn.z, g.data_mut());
            matvec_t_acc(w.data(), n, &acc.dpre_base, &mut dz);
        }
        outer_acc(&acc.dpre_base, &turn.x, self.w_xm.grad_mut().data_mut());
        for ((w, d), p) in self.w_pm.iter_mut().zip(&acc.dslot).zip(&turn.beliefs) {
            outer_acc(d, p, w.grad_mut().data_mut());
        }
        if let Some(a) = &mut self.attention {
            let mut dshared = vec![0.0; n];
            for ((w, d), p) in a.w_rp.iter_mut().zip(&acc.datt).zip(&turn.beliefs) {
                outer_acc(d, p, w.grad_mut().data_mut());
                axpy(1.0, d, &mut dshared);
            }
            let mut dv = vec![0.0; n];
            {
                let (w, g) = a.w_rv.split();
                outer_acc(&dshared, &turn.v, g.data_mut());
                matvec_t_acc(w.data(), n, &dshared, &mut dv);
            }
            outer_acc(&dv, &turn.x, a.p_x.grad_mut().data_mut());
            axpy(1.0, &dv, &mut dz);
        }
        dz
    }
}
