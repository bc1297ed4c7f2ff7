//! Central finite-difference verification of tape gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// One evaluation of the objective under test.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    /// Analytic gradient per parameter tensor, present when requested.
    pub grads: Option<Vec<Tensor>>,
    /// Kink inputs recorded by the tape (see [`super::Tape::kink_inputs`]).
    pub kinks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(tensor index, element index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub excluded: usize,
}

/// `|a - c| / max(|a|, |c|, 1e-8)`.
pub fn relative_error(analytic: f64, central: f64) -> f64 {
    (analytic - central).abs() / analytic.abs().max(central.abs()).max(1e-8)
}

/// Compares analytic gradients against central differences at `step`.
///
/// `f(params, need_grad)` must be deterministic. A coordinate is excluded when
/// some kink input lies within `10 * step` of its kink at the base point and
/// moves between the two perturbed evaluations, i.e. the perturbation may
/// straddle a non-differentiable point.
pub fn finite_difference_check<F>(mut f: F, params: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor], bool) -> Result<Evaluation>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!("step must be positive, got {step}")));
    }
    let base = f(params, true)?;
    check_finite(base.value)?;
    let analytic = base
        .grads
        .ok_or_else(|| Error::Contract("objective returned no gradients".into()))?;
    if analytic.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradient tensors for {} parameters",
            analytic.len(),
            params.len()
        )));
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        excluded: 0,
    };
    let margin = 10.0 * step;

    for (ti, tensor) in params.iter().enumerate() {
        for ei in 0..tensor.len() {
            let orig = tensor.data()[ei];
            work[ti].data_mut()[ei] = orig + step;
            let plus = f(&work, false)?;
            work[ti].data_mut()[ei] = orig - step;
            let minus = f(&work, false)?;
            work[ti].data_mut()[ei] = orig;
            check_finite(plus.value)?;
            check_finite(minus.value)?;

            if crosses_kink(&base.kinks, &plus.kinks, &minus.kinks, margin) {
                report.excluded += 1;
                continue;
            }
            let central = (plus.value - minus.value) / (2.0 * step);
            let err = relative_error(analytic[ti].data()[ei], central);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((ti, ei));
            }
        }
    }
    Ok(report)
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("objective evaluated to {v}")))
    }
}

fn crosses_kink(base: &[f64], plus: &[f64], minus: &[f64], margin: f64) -> bool {
    if base.len() != plus.len() || base.len() != minus.len() {
        // Tape structure changed under perturbation; treat as non-smooth.
        return true;
    }
    base.iter()
        .zip(plus.iter().zip(minus))
        .any(|(b, (p, m))| b.abs() < margin && p != m)
}
