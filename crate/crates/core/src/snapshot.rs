//! Snapshot targets and the companion loss on the first `d` components of
//! the conditioning vector.

use serde::{Deserialize, Serialize};

use crate::corpus::{value_token, Dialogue, Ontology};
use crate::error::{Error, Result};
use crate::numerics::ops::{bce_scalar, bce_scalar_grad, CLAMP_EPS};

pub const OFFERED: &str = "offered";

/// Ordered indicator ids: `offered`, then one per tracked value token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndicatorSpec(pub Vec<String>);

impl IndicatorSpec {
    /// `offered`, `[v.name]`, then the value token of every requestable slot.
    pub fn for_ontology(ontology: &Ontology) -> Self {
        let mut ids = vec![OFFERED.to_string(), value_token("name")];
        ids.extend(ontology.requestable.iter().map(|s| value_token(s)));
        IndicatorSpec(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-turn, per-step binary targets (`turns x steps x d`).
pub type SnapshotTargets = Vec<Vec<Vec<f64>>>;

/// Targets for every turn of a dialogue. Steps follow the system tokens,
/// end-of-sentence included.
///
/// The offered indicator is 0 before the first turn whose response contains
/// `[v.name]` and 1 from that turn on. A token indicator is, with attention,
/// 1 at step `j` iff the token occurs in the response from position `j`
/// onward; without attention it is 1 throughout a turn iff the token occurs
/// anywhere in the response.
pub fn label_snapshots(dialogue: &Dialogue, spec: &IndicatorSpec, attention: bool) -> SnapshotTargets {
    let name = value_token("name");
    let mut offered = false;
    dialogue
        .turns
        .iter()
        .map(|turn| {
            let sys = &turn.sys;
            offered |= sys.contains(&name);
            (0..sys.len())
                .map(|j| {
                    spec.0
                        .iter()
                        .map(|id| {
                            let on = if id == OFFERED {
                                offered
                            } else if attention {
                                sys[j..].iter().any(|w| w == id)
                            } else {
                                sys.iter().any(|w| w == id)
                            };
                            if on {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Map a tanh activation into `[0, 1]`.
#[inline]
pub fn squeeze(a: f64) -> f64 {
    (a + 1.0) / 2.0
}

/// Mean binary cross-entropy of one step's squeezed activations.
pub fn step_loss(m_hat: &[f64], target: &[f64]) -> f64 {
    let d = target.len() as f64;
    m_hat
        .iter()
        .zip(target)
        .map(|(&a, &y)| bce_scalar(y, squeeze(a), CLAMP_EPS))
        .sum::<f64>()
        / d
}

/// Adds `scale * d step_loss / d m_hat` into `grad`.
pub fn step_loss_backward(m_hat: &[f64], target: &[f64], scale: f64, grad: &mut [f64]) {
    let d = target.len() as f64;
    for ((g, &a), &y) in grad.iter_mut().zip(m_hat).zip(target) {
        *g += scale * bce_scalar_grad(y, squeeze(a), CLAMP_EPS) * 0.5 / d;
    }
}

/// Companion loss over a turn: per-step mean cross-entropy summed over steps.
pub fn snapshot_loss(trace: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if trace.len() != targets.len() {
        return Err(Error::Alignment(format!(
            "{} traced steps vs {} target steps",
            trace.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (m, y) in trace.iter().zip(targets) {
        if m.len() != y.len() {
            return Err(Error::Alignment(format!("{} activations vs {} targets", m.len(), y.len())));
        }
        total += step_loss(m, y);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Goal, Labels, Turn};

    fn dialogue(responses: &[&str]) -> Dialogue {
        let o = Ontology::restaurant();
        Dialogue {
            id: "t".into(),
            goal: Goal {
                constraints: Default::default(),
                requests: vec![],
            },
            turns: responses
                .iter()
                .map(|r| Turn {
                    user: vec!["hi".into()],
                    user_surface: vec!["hi".into()],
                    sys: r.split_whitespace().map(String::from).collect(),
                    labels: Labels::empty(&o),
                    db_match: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn suffix_labels_for_value_token() {
        let o = Ontology::restaurant();
        let spec = IndicatorSpec::for_ontology(&o);
        let d = dialogue(&["[v.name] serves [v.food] food <eos>"]);
        let t = label_snapshots(&d, &spec, true);
        let food = spec.0.iter().position(|x| x == "[v.food]").unwrap();
        let col: Vec<f64> = t[0].iter().map(|s| s[food]).collect();
        assert_eq!(col, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        let phone = spec.0.iter().position(|x| x == "[v.phone]").unwrap();
        assert!(t[0].iter().all(|s| s[phone] == 0.0));
    }

    #[test]
    fn offered_switches_on_and_stays() {
        let o = Ontology::restaurant();
        let spec = IndicatorSpec::for_ontology(&o);
        let d = dialogue(&["what [s.food] do you want <eos>", "[v.name] is nice <eos>", "bye <eos>"]);
        let t = label_snapshots(&d, &spec, false);
        assert!(t[0].iter().all(|s| s[0] == 0.0));
        assert!(t[1].iter().chain(&t[2]).all(|s| s[0] == 1.0));
    }

    #[test]
    fn saturated_activations_cost_nothing() {
        let l = step_loss(&[1.0, -1.0], &[1.0, 0.0]);
        assert!(l < 1e-9);
        let l = step_loss(&[0.0, 0.0], &[1.0, 0.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(snapshot_loss(&[vec![0.0]], &[]).is_err());
    }
}
