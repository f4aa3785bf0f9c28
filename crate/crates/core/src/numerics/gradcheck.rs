//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::{NumericsError, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Floor of the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` where the maximum occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Checks the gradient of scalar `f` with respect to a single input and
/// returns the maximum relative error over its coordinates.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericsError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NumericsError>,
{
    Ok(grad_check_many(f, std::slice::from_ref(x), eps)?.max_rel_error)
}

/// Checks the gradient of scalar `f` with respect to every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport, NumericsError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NumericsError>,
{
    if eps.is_nan() || eps <= 0.0 || eps.is_infinite() {
        return Err(NumericsError::Domain(format!("finite-difference step must be positive, got {eps}")));
    }

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| tape.grad_or_zeros(*v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64, NumericsError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars)?;
        if !out.value().is_scalar() {
            return Err(NumericsError::NotScalar(out.shape()));
        }
        Ok(out.item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for c in 0..inputs[i].numel() {
            let orig = inputs[i].data()[c];
            work[i].data_mut()[c] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[c] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[c] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[c];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = err;
                report.worst = (i, c);
                report.analytic = a;
                report.numeric = numeric;
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}
