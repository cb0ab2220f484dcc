//! Central-difference gradient checking with a rectifier kink filter.

use crate::error::{domain_err, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Worst relative error over the checked coordinates.
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a rectifier kink.
    pub skipped: usize,
}

/// Compares `analytic` against central differences of `eval` at `theta`.
///
/// `eval` returns `(loss, rectifier sign pattern)`. A coordinate is skipped
/// when the two perturbed evaluations land on different sign patterns: a kink
/// sits inside the `+-epsilon` interval and the central difference is
/// meaningless there. Relative error is scaled by
/// `max(|analytic|, |numeric|, 1e-6 * max(1, |loss|))`; the loss-scaled floor
/// keeps coordinates whose gradient sits below the difference's cancellation
/// noise from reporting spurious errors.
pub fn grad_check<F>(
    theta: &[f64],
    analytic: &[f64],
    epsilon: f64,
    mut eval: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> (f64, u64),
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return domain_err(format!("epsilon {epsilon} outside [1e-7, 1e-3]"));
    }
    if theta.len() != analytic.len() {
        return domain_err("parameter and gradient lengths differ");
    }
    let (base_loss, _) = eval(theta);
    if !base_loss.is_finite() {
        return domain_err("non-finite loss during gradient check");
    }
    let floor = 1e-6 * base_loss.abs().max(1.0);
    let mut work = theta.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for i in 0..theta.len() {
        work[i] = theta[i] + epsilon;
        let (lp, pp) = eval(&work);
        work[i] = theta[i] - epsilon;
        let (lm, pm) = eval(&work);
        work[i] = theta[i];
        if !lp.is_finite() || !lm.is_finite() {
            return domain_err("non-finite loss during gradient check");
        }
        if pp != pm {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * epsilon);
        let rel = (numeric - analytic[i]).abs()
            / numeric.abs().max(analytic[i].abs()).max(floor);
        if rel > max_rel_err {
            max_rel_err = rel;
        }
        checked += 1;
    }
    Ok(GradCheckReport { max_rel_err, checked, skipped })
}
