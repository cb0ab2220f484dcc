//! Executable verification of the two theorems: kernel-sum pruning scaling
//! laws on linear conv nets, and the min-rotation-distance lower bound for
//! finetuned pruned ReLU nets, backed by Gram-matrix dynamics checks.

pub mod gd;
pub mod gram;
pub mod thm1;
pub mod thm2;

pub use gd::{train_orcnn_gd, GdConfig, GdReport};
pub use gram::{
    gram_concentration_experiment, gram_empirical, gram_infty, lambda0, lambda_min,
    GramConcentrationConfig, GramConcentrationReport, GramKind, GramMatrix,
};
pub use thm1::{theorem1_experiment, ScalingPoint, ScalingReport, Theorem1Config};
pub use thm2::{theorem2_experiment, Theorem2Config, Theorem2Report, Theorem2Row};

use crate::error::{domain_err, Result};
use crate::tensor::l2_norm;

/// Minimum of the normalized l2 distance over all rotations of one operand:
/// `| ||a|| - ||b|| | / sqrt(||a|| ||b||)`.
///
/// Rotations act transitively on spheres, so the minimum depends only on the
/// two norms; operands of different sizes are implicitly zero-embedded to a
/// common shape, which changes neither norm.
pub fn min_rotation_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return domain_err("min rotation distance undefined for zero-norm operands");
    }
    Ok((na - nb).abs() / (na * nb).sqrt())
}

/// The closed-form lazy-regime prediction `(1-p)^(-1/4) - (1-p)^(1/4)`.
pub fn rotation_distance_prediction(p: f64) -> f64 {
    (1.0 - p).powf(-0.25) - (1.0 - p).powf(0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn equal_norms_align_exactly() {
        let a = [3.0, 0.0, 0.0];
        let b = [0.0, -3.0, 0.0];
        assert_eq!(min_rotation_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn norm_one_vs_four() {
        let a = [1.0];
        let b = [4.0];
        let d = min_rotation_distance(&a, &b).unwrap();
        assert!((d - 1.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_at_p_036_exceeds_half_p() {
        let pred = rotation_distance_prediction(0.36);
        assert!((pred - 0.22360679).abs() < 1e-7);
        assert!(pred >= 0.18);
    }

    #[test]
    fn zero_norm_rejected() {
        assert!(min_rotation_distance(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn invariant_under_orthogonal_transforms() {
        // Apply a random Givens rotation to one argument; distance unchanged.
        let mut rng = stream(31, "theory-test", 0);
        let a: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() - 0.5).collect();
        let base = min_rotation_distance(&a, &b).unwrap();
        let theta: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let mut rotated = b.clone();
        let (i, j) = (1, 4);
        rotated[i] = theta.cos() * b[i] - theta.sin() * b[j];
        rotated[j] = theta.sin() * b[i] + theta.cos() * b[j];
        let after = min_rotation_distance(&a, &rotated).unwrap();
        assert!((base - after).abs() < 1e-12);
    }

    #[test]
    fn distance_zero_iff_equal_norms() {
        let a = [1.0, 2.0];
        let b = [2.0, 1.0000001];
        assert!(min_rotation_distance(&a, &b).unwrap() > 0.0);
    }
}
