//! Dense tensors, parameters with gradient buffers, hand-differentiated ops,
//! SGD with clipping and a finite-difference gradient checker.

mod gradcheck;
pub mod ops;
mod param;
mod rng;
mod tensor;

pub use gradcheck::{grad_check, grad_check_sampled, grad_check_with, relative_error, GradCheckReport, Stencil};
pub use param::{clip_and_step, ClipMode, ParamSet, Parameter, SgdStep};
pub use rng::Rng;
pub use tensor::{
    axpy, dot, matvec, matvec_acc, matvec_t_acc, outer_acc, sigmoid_scalar, softmax_in_place, Tensor,
};
