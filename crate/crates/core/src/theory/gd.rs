//! Full-batch gradient descent on the ReLU conv net with the NTK-style
//! dynamics checks: geometric loss envelope, per-filter weight movement and
//! per-step gradient-norm bound, all against the analytic Gram eigenvalue.

use crate::error::{domain_err, shape_err, Result};
use crate::models::relu_net::{PatchSet, ReluConvNet};
use crate::tensor::l2_norm;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GdConfig {
    pub eta: f64,
    pub max_iters: usize,
    /// Early stop once the squared residual drops below this.
    pub residual_sq_stop: f64,
}

impl GdConfig {
    /// Learning rate `scale * lambda0 / n^2` with the default iteration cap.
    pub fn from_lambda0(lambda0: f64, samples: usize, scale: f64) -> Self {
        GdConfig {
            eta: scale * lambda0 / (samples * samples) as f64,
            max_iters: 5000,
            residual_sq_stop: 1e-10,
        }
    }
}

/// Trajectory record and bound checks for one training run.
#[derive(Debug, Clone)]
pub struct GdReport {
    /// Squared residual `||F(W(t)) - y||^2` at t = 0..=iterations.
    pub residual_sq: Vec<f64>,
    pub iterations: usize,
    /// `||F - y||^2 <= (1 - eta lambda0 / 2)^t * ||F(0) - y||^2` at every step.
    pub envelope_ok: bool,
    /// Max over filters and steps of `||W_r(t) - W_r(0)||`.
    pub max_filter_movement: f64,
    /// `4 sqrt(q n) / (sqrt(M) lambda0) * ||F(0) - y||`.
    pub movement_bound: f64,
    pub movement_ok: bool,
    /// Per-filter gradient norms stayed within `sqrt(q n / M) ||F - y||`.
    pub grad_bound_ok: bool,
}

fn residual_sq(outputs: &[f64], labels: &[f64]) -> f64 {
    outputs.iter().zip(labels).map(|(f, y)| (f - y) * (f - y)).sum()
}

/// Runs gradient descent on the squared loss, updating the filter bank only
/// (signs stay fixed), and checks the three dynamics bounds at every step.
pub fn train_orcnn_gd(
    model: &mut ReluConvNet,
    patches: &PatchSet,
    labels: &[f64],
    lambda0: f64,
    cfg: &GdConfig,
) -> Result<GdReport> {
    if patches.samples() != labels.len() {
        return shape_err("label count does not match sample count");
    }
    let n = patches.samples() as f64;
    if cfg.eta > 0.5 * lambda0 / (n * n) {
        return domain_err(format!(
            "learning rate {} exceeds 0.5 * lambda0 / n^2 = {}",
            cfg.eta,
            0.5 * lambda0 / (n * n)
        ));
    }
    let m = model.filters();
    let q = model.retained_fraction();
    let w0 = model.weights.clone();
    let grad_bound_coeff = (q * n / m as f64).sqrt();

    let mut residuals = Vec::with_capacity(cfg.max_iters + 1);
    let r0 = residual_sq(&model.outputs(patches), labels);
    residuals.push(r0);
    let movement_bound = 4.0 * (q * n).sqrt() / ((m as f64).sqrt() * lambda0) * r0.sqrt();
    let decay = 1.0 - cfg.eta * lambda0 / 2.0;

    let mut envelope_ok = true;
    let mut movement_ok = true;
    let mut grad_bound_ok = true;
    let mut max_move = 0.0f64;
    let mut envelope = r0;

    let mut t = 0;
    while t < cfg.max_iters && *residuals.last().unwrap() > cfg.residual_sq_stop {
        let (loss, grad) = model.loss_and_grad(patches, labels)?;
        if !loss.is_finite() {
            return domain_err("training diverged to a non-finite loss");
        }
        let r_now = residuals[t];
        for r in 0..m {
            let g = l2_norm(grad.filter(r));
            if g > grad_bound_coeff * r_now.sqrt() + 1e-12 {
                grad_bound_ok = false;
            }
        }
        for (w, g) in model.weights.values_mut().iter_mut().zip(grad.values()) {
            *w -= cfg.eta * g;
        }
        t += 1;
        let r_next = residual_sq(&model.outputs(patches), labels);
        if r_next > r_now * (1.0 + 1e-6) + 1e-12 {
            return domain_err(format!(
                "residual increased from {r_now} to {r_next} at step {t}; config rejected"
            ));
        }
        residuals.push(r_next);
        envelope *= decay;
        if r_next > envelope * (1.0 + 1e-9) + 1e-300 {
            envelope_ok = false;
        }
        let mut step_max = 0.0f64;
        for r in 0..m {
            let mut acc = 0.0;
            for (a, b) in model.weights.filter(r).iter().zip(w0.filter(r)) {
                acc += (a - b) * (a - b);
            }
            step_max = step_max.max(acc.sqrt());
        }
        max_move = max_move.max(step_max);
        if step_max > movement_bound + 1e-12 {
            movement_ok = false;
        }
    }

    Ok(GdReport {
        residual_sq: residuals,
        iterations: t,
        envelope_ok,
        max_filter_movement: max_move,
        movement_bound,
        movement_ok,
        grad_bound_ok,
    })
}
