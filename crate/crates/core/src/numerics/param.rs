use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A named trainable tensor with its gradient accumulator. Equality
/// ignores the accumulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    #[serde(skip)]
    grad: Option<Tensor>,
}

impl PartialEq for Parameter {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.value == other.value
    }
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Parameter {
            name: name.into(),
            grad: Some(Tensor::zeros(value.shape())),
            value,
        }
    }

    pub fn grad(&self) -> &Tensor {
        self.grad.as_ref().expect("gradient buffer initialised")
    }

    pub fn grad_mut(&mut self) -> &mut Tensor {
        if self.grad.is_none() {
            self.grad = Some(Tensor::zeros(self.value.shape()));
        }
        self.grad.as_mut().unwrap()
    }

    /// Value and gradient as disjoint borrows.
    pub fn split(&mut self) -> (&Tensor, &mut Tensor) {
        if self.grad.is_none() {
            self.grad = Some(Tensor::zeros(self.value.shape()));
        }
        (&self.value, self.grad.as_mut().unwrap())
    }

    pub fn zero_grad(&mut self) {
        self.grad_mut().fill(0.0);
    }

    /// Restores the gradient buffer after deserialisation.
    pub fn ensure_grad(&mut self) {
        let _ = self.grad_mut();
    }
}

/// Anything that owns a flat collection of parameters.
pub trait ParamSet {
    fn params(&self) -> Vec<&Parameter>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// Rescale the whole gradient so its L2 norm is at most the threshold.
    #[default]
    Norm,
    /// Clamp each gradient element to `[-threshold, threshold]`.
    Element,
}

impl std::str::FromStr for ClipMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(ClipMode::Norm),
            "element" => Ok(ClipMode::Element),
            _ => Err(Error::Config(format!("unknown clip mode {s:?} (expected norm or element)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdStep {
    pub lr: f64,
    pub l2: f64,
    /// Non-positive disables clipping.
    pub clip: f64,
    pub clip_mode: ClipMode,
}

/// Clip the accumulated gradients, apply `value -= lr * (grad + l2 * value)`,
/// then zero the gradients. Returns the gradient norm before clipping.
pub fn clip_and_step(params: &mut [&mut Parameter], step: &SgdStep) -> Result<f64> {
    let mut sq = 0.0;
    for p in params.iter() {
        let g = p.grad();
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient in parameter {}", p.name)));
        }
        sq += g.sum_sq();
    }
    let norm = sq.sqrt();
    let scale = match step.clip_mode {
        ClipMode::Norm if step.clip > 0.0 && norm > step.clip => step.clip / norm,
        _ => 1.0,
    };
    let elem_clip = (step.clip_mode == ClipMode::Element && step.clip > 0.0).then_some(step.clip);
    for p in params.iter_mut() {
        p.ensure_grad();
        let Parameter { value, grad, .. } = &mut **p;
        let grad = grad.as_mut().expect("gradient buffer");
        for (v, g) in value.data_mut().iter_mut().zip(grad.data_mut()) {
            let mut gv = *g * scale;
            if let Some(c) = elem_clip {
                gv = gv.clamp(-c, c);
            }
            *v -= step.lr * (gv + step.l2 * *v);
            *g = 0.0;
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(vals: &[f64], grads: &[f64]) -> Parameter {
        let mut p = Parameter::new("p", Tensor::vector(vals.to_vec()).unwrap());
        p.grad_mut().data_mut().copy_from_slice(grads);
        p
    }

    const STEP: SgdStep = SgdStep {
        lr: 0.1,
        l2: 0.01,
        clip: 1.0,
        clip_mode: ClipMode::Norm,
    };

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = param(&[2.0, -4.0], &[0.0, 0.0]);
        clip_and_step(&mut [&mut p], &STEP).unwrap();
        let expect = [2.0 - 0.1 * 0.01 * 2.0, -4.0 + 0.1 * 0.01 * 4.0];
        for (a, b) in p.value.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(p.grad().data(), &[0.0, 0.0]);
    }

    #[test]
    fn norm_five_is_scaled_by_a_fifth() {
        let mut p = param(&[0.0, 0.0], &[3.0, 4.0]);
        let norm = clip_and_step(&mut [&mut p], &SgdStep { l2: 0.0, ..STEP }).unwrap();
        assert_eq!(norm, 5.0);
        let expect = [-0.1 * 0.6, -0.1 * 0.8];
        for (a, b) in p.value.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn element_clipping() {
        let mut p = param(&[0.0, 0.0], &[3.0, -0.5]);
        let step = SgdStep {
            lr: 1.0,
            l2: 0.0,
            clip: 1.0,
            clip_mode: ClipMode::Element,
        };
        clip_and_step(&mut [&mut p], &step).unwrap();
        assert_eq!(p.value.data(), &[-1.0, 0.5]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = param(&[0.0], &[0.0]);
        p.grad_mut().data_mut()[0] = f64::INFINITY;
        p.name = "w_out".into();
        let err = clip_and_step(&mut [&mut p], &STEP).unwrap_err();
        assert!(err.to_string().contains("w_out"));
    }

    #[test]
    fn quadratic_converges_to_closed_form_minimum() {
        // f(a, b) = (a - 3)^2 + 2 (b + 1)^2 + a b, minimum at H [a b]^T = [6 -4]^T.
        let hess = [[2.0, 1.0], [1.0, 4.0]];
        let rhs = [6.0, -4.0];
        let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        let a_star = (rhs[0] * hess[1][1] - hess[0][1] * rhs[1]) / det;
        let b_star = (hess[0][0] * rhs[1] - rhs[0] * hess[1][0]) / det;
        let mut a = Parameter::new("a", Tensor::vector(vec![0.0]).unwrap());
        let mut b = Parameter::new("b", Tensor::vector(vec![0.0]).unwrap());
        let step = SgdStep {
            lr: 0.1,
            l2: 0.0,
            clip: 1.0,
            clip_mode: ClipMode::Norm,
        };
        for _ in 0..2000 {
            let (av, bv) = (a.value.data()[0], b.value.data()[0]);
            a.grad_mut().data_mut()[0] = 2.0 * (av - 3.0) + bv;
            b.grad_mut().data_mut()[0] = 4.0 * (bv + 1.0) + av;
            clip_and_step(&mut [&mut a, &mut b], &step).unwrap();
        }
        assert!((a.value.data()[0] - a_star).abs() < 1e-6);
        assert!((b.value.data()[0] - b_star).abs() < 1e-6);
    }
}
