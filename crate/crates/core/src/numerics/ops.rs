//! Tensor-level forward ops, each paired with its hand-derived backward.
//!
//! The model code calls the slice kernels in [`super::tensor`] directly on
//! its hot paths; these wrappers are the checked, shape-validated surface and
//! the unit the finite-difference tests exercise.

use crate::error::{Error, Result};
use crate::numerics::tensor::{matvec, matvec_t_acc, outer_acc, sigmoid_scalar, softmax_in_place};
use crate::numerics::Tensor;

/// Clamp applied to predicted probabilities before taking logs.
pub const CLAMP_EPS: f64 = 1e-10;

/// `y = W x (+ b)`.
pub fn affine(w: &Tensor, x: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    check_affine(w, x)?;
    let m = w.rows();
    if let Some(b) = b {
        if b.len() != m {
            return Err(Error::dim(format!("bias length {} for {m} rows", b.len())));
        }
    }
    x.check_finite("affine input")?;
    let mut y = vec![0.0; m];
    matvec(w.data(), w.cols(), x.data(), &mut y);
    if let Some(b) = b {
        y.iter_mut().zip(b.data()).for_each(|(y, b)| *y += b);
    }
    Tensor::vector(y)
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dw: Tensor,
    pub dx: Tensor,
    pub db: Option<Tensor>,
}

pub fn affine_backward(w: &Tensor, x: &Tensor, with_bias: bool, dy: &Tensor) -> Result<AffineGrads> {
    check_affine(w, x)?;
    if dy.len() != w.rows() {
        return Err(Error::dim(format!("upstream length {} for {} rows", dy.len(), w.rows())));
    }
    let mut dw = Tensor::zeros(w.shape());
    outer_acc(dy.data(), x.data(), dw.data_mut());
    let mut dx = Tensor::zeros(&[x.len()]);
    matvec_t_acc(w.data(), w.cols(), dy.data(), dx.data_mut());
    Ok(AffineGrads {
        dw,
        dx,
        db: with_bias.then(|| dy.clone()),
    })
}

fn check_affine(w: &Tensor, x: &Tensor) -> Result<()> {
    if w.shape().len() != 2 || x.shape().len() != 1 || w.cols() != x.len() {
        return Err(Error::dim(format!(
            "cannot apply {:?} to {:?}",
            w.shape(),
            x.shape()
        )));
    }
    Ok(())
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = f(*v));
    y
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut y = a.clone();
    y.data_mut()
        .iter_mut()
        .zip(b.data())
        .for_each(|(v, &w)| *v = f(*v, w));
    y
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, sigmoid_scalar)
}

/// Backward from the forward output `y`.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    zip_map(y, dy, |y, g| g * y * (1.0 - y))
}

pub fn tanh(x: &Tensor) -> Tensor {
    map(x, f64::tanh)
}

pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    zip_map(y, dy, |y, g| g * (1.0 - y * y))
}

pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::dim("softmax of an empty vector"));
    }
    let mut y = x.clone();
    softmax_in_place(y.data_mut());
    Ok(y)
}

pub fn softmax_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let inner: f64 = y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
    zip_map(y, dy, |y, g| y * (g - inner))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossEntropyKind {
    /// `-sum t log p`
    Categorical,
    /// `-sum t log p + (1 - t) log(1 - p)`
    Binary,
}

#[inline]
fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Elementwise binary cross-entropy with clamping.
#[inline]
pub fn bce_scalar(target: f64, pred: f64, eps: f64) -> f64 {
    let p = clamp_prob(pred, eps);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// d/dpred of [`bce_scalar`]; zero where the clamp is active.
#[inline]
pub fn bce_scalar_grad(target: f64, pred: f64, eps: f64) -> f64 {
    if pred <= eps || pred >= 1.0 - eps {
        return 0.0;
    }
    -target / pred + (1.0 - target) / (1.0 - pred)
}

pub fn cross_entropy(kind: CrossEntropyKind, target: &Tensor, pred: &Tensor, eps: f64) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::dim(format!(
            "target length {} vs prediction length {}",
            target.len(),
            pred.len()
        )));
    }
    let pairs = target.data().iter().zip(pred.data());
    Ok(match kind {
        CrossEntropyKind::Categorical => pairs.map(|(&t, &p)| -t * clamp_prob(p, eps).ln()).sum(),
        CrossEntropyKind::Binary => pairs.map(|(&t, &p)| bce_scalar(t, p, eps)).sum(),
    })
}

/// Gradient of [`cross_entropy`] with respect to the prediction.
pub fn cross_entropy_backward(kind: CrossEntropyKind, target: &Tensor, pred: &Tensor, eps: f64) -> Result<Tensor> {
    if target.len() != pred.len() {
        return Err(Error::dim("cross-entropy backward length mismatch"));
    }
    Ok(zip_map(pred, target, |p, t| match kind {
        CrossEntropyKind::Categorical => {
            if p <= eps || p >= 1.0 - eps {
                0.0
            } else {
                -t / p
            }
        }
        CrossEntropyKind::Binary => bce_scalar_grad(t, p, eps),
    }))
}
