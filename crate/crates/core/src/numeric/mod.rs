//! Dense `f64` tensors, a reverse-mode tape and a finite-difference checker.

mod gradcheck;
mod lstm_kernel;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{gradcheck, relative_error, GradcheckReport, DEFAULT_EPS, DEFAULT_TOL};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tape::{sigmoid, softmax, Gradients, Tape, Var, LOG_CLAMP};
pub use tensor::Tensor;
