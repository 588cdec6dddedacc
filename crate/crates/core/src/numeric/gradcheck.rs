//! Central finite-difference verification of tape gradients.

use crate::error::Result;

use super::params::{BoundParams, ParamStore};
use super::tape::{Tape, Var};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
    pub tol: f64,
    pub passed: bool,
}

/// `|a - b| / max(1, |a|, |b|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compare tape gradients of the scalar `loss_fn` against central differences
/// `(f(θ+ε) - f(θ-ε)) / 2ε`, one coordinate at a time.
pub fn gradcheck<F>(params: &ParamStore, loss_fn: F, eps: f64, tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var>,
{
    let evaluate = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let loss = loss_fn(&mut tape, &bound)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = loss_fn(&mut tape, &bound)?;
    let grads = tape.backward(loss)?;
    let analytic = params.gradients(&bound, &grads);

    let mut probe = params.clone();
    let mut max_rel_error = 0.0;
    let mut worst = None;
    let mut coordinates = 0;
    for (p, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let original = params.tensors()[p].data()[i];
            probe.tensors_mut()[p].data_mut()[i] = original + eps;
            let plus = evaluate(&probe)?;
            probe.tensors_mut()[p].data_mut()[i] = original - eps;
            let minus = evaluate(&probe)?;
            probe.tensors_mut()[p].data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grad.data()[i], numeric);
            if err > max_rel_error || worst.is_none() {
                max_rel_error = f64::max(max_rel_error, err);
                worst = Some((params.names()[p].clone(), i));
            }
            coordinates += 1;
        }
    }
    Ok(GradcheckReport {
        max_rel_error,
        worst,
        coordinates,
        tol,
        passed: max_rel_error < tol,
    })
}
