//! Central finite-difference verification of analytic gradients.

use super::{Gradients, Parameterized};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so entries whose true gradient is
/// ~0 are judged on an absolute scale instead of amplifying rounding noise.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Block holding the worst entry.
    pub worst_block: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `eval`'s analytic gradient against central differences with step
/// [`FD_STEP`] on every parameter of `model`.
///
/// `eval` must return the loss and gradients for the model as passed; it is
/// called once unperturbed and twice per parameter entry. The model is
/// restored bit-for-bit before returning.
pub fn grad_check<M, F>(model: &mut M, mut eval: F, tolerance: f64) -> Result<GradCheckReport>
where
    M: Parameterized,
    F: FnMut(&M) -> Result<(f64, Gradients)>,
{
    let names = model.param_names();
    let (loss, analytic) = eval(model)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} at the base point")));
    }
    let lens: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    if analytic.blocks.len() != lens.len()
        || analytic
            .blocks
            .iter()
            .zip(&lens)
            .any(|(g, &n)| g.len() != n)
    {
        return Err(Error::Dimension(
            "gradient blocks do not match parameter blocks".into(),
        ));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        tolerance,
        passed: true,
        worst_block: names.first().cloned().unwrap_or_default(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (block, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let original = model.params()[block][i];
            model.params_mut()[block][i] = original + FD_STEP;
            let plus = eval(model).map(|r| r.0);
            model.params_mut()[block][i] = original - FD_STEP;
            let minus = eval(model).map(|r| r.0);
            model.params_mut()[block][i] = original;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {}[{i}]",
                    names[block]
                )));
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.blocks[block][i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || err.is_nan() {
                report.max_relative_error = err;
                report.worst_block = names[block].clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_relative_error < tolerance;
    Ok(report)
}
