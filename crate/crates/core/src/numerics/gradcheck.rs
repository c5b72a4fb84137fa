use crate::numerics::ParamSet;

/// Worst disagreement found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Relative error with the `1e-8` denominator guard.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + 1e-8)
}

/// Compare analytic gradients with central differences over every coordinate.
///
/// `loss(model, accumulate)` must return the scalar loss and, when
/// `accumulate` is true, add its gradient into the parameters' buffers.
pub fn grad_check<M, F>(model: &mut M, eps: f64, loss: F) -> GradCheckReport
where
    M: ParamSet,
    F: FnMut(&mut M, bool) -> f64,
{
    grad_check_sampled(model, eps, usize::MAX, loss)
}

/// Like [`grad_check`] but visits at most `per_param` evenly strided
/// coordinates of each parameter.
pub fn grad_check_sampled<M, F>(model: &mut M, eps: f64, per_param: usize, loss: F) -> GradCheckReport
where
    M: ParamSet,
    F: FnMut(&mut M, bool) -> f64,
{
    grad_check_with(model, eps, per_param, Stencil::TwoPoint, loss)
}

/// Central difference formula used for the numeric derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`.
    #[default]
    TwoPoint,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`; tolerates a larger
    /// `h`, which keeps rounding noise below tiny gradients.
    FourPoint,
}

pub fn grad_check_with<M, F>(model: &mut M, eps: f64, per_param: usize, stencil: Stencil, mut loss: F) -> GradCheckReport
where
    M: ParamSet,
    F: FnMut(&mut M, bool) -> f64,
{
    model.zero_grads();
    loss(model, true);
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad().data().to_vec())
        .collect();
    model.zero_grads();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        param: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (pi, grads) in analytic.iter().enumerate() {
        let len = grads.len();
        let stride = if per_param >= len { 1 } else { len.div_ceil(per_param) };
        for idx in (0..len).step_by(stride.max(1)) {
            let original = model.params()[pi].value.data()[idx];
            let mut at = |delta: f64| {
                set(model, pi, idx, original + delta);
                let v = loss(model, false);
                set(model, pi, idx, original);
                v
            };
            let numeric = match stencil {
                Stencil::TwoPoint => (at(eps) - at(-eps)) / (2.0 * eps),
                Stencil::FourPoint => {
                    let near = at(eps) - at(-eps);
                    let far = at(2.0 * eps) - at(-2.0 * eps);
                    (8.0 * near - far) / (12.0 * eps)
                }
            };
            let err = relative_error(grads[idx], numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.param = model.params()[pi].name.clone();
                report.index = idx;
                report.analytic = grads[idx];
                report.numeric = numeric;
            }
        }
    }
    report
}

fn set<M: ParamSet>(model: &mut M, param: usize, idx: usize, v: f64) {
    model.params_mut()[param].value.data_mut()[idx] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Parameter, Tensor};

    struct Quad(Parameter);

    impl ParamSet for Quad {
        fn params(&self) -> Vec<&Parameter> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Parameter> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn half_squared_norm_is_exact() {
        let mut q = Quad(Parameter::new(
            "theta",
            Tensor::vector(vec![0.5, -1.5, 2.0, 3.25]).unwrap(),
        ));
        let report = grad_check(&mut q, 1e-5, |m, acc| {
            let v = m.0.value.data().to_vec();
            if acc {
                m.0.grad_mut().data_mut().iter_mut().zip(&v).for_each(|(g, x)| *g += x);
            }
            0.5 * v.iter().map(|x| x * x).sum::<f64>()
        });
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut q = Quad(Parameter::new("theta", Tensor::vector(vec![1.0, 2.0]).unwrap()));
        let report = grad_check(&mut q, 1e-5, |m, acc| {
            let v = m.0.value.data().to_vec();
            if acc {
                m.0.grad_mut().data_mut()[0] += 2.0 * v[0];
                m.0.grad_mut().data_mut()[1] += v[1];
            }
            0.5 * v.iter().map(|x| x * x).sum::<f64>()
        });
        assert!(report.max_rel_err > 0.4);
        assert_eq!(report.index, 0);
    }
}
