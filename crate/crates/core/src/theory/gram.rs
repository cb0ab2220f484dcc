//! Patch-indicator Gram matrices: the empirical matrix of a finite filter
//! bank and its infinite-width expectation via the arc-cosine identity
//! `E[1{<W,u> >= 0} 1{<W,v> >= 0}] = (pi - angle(u,v)) / (2 pi)` for standard
//! Gaussian `W`.

use crate::error::{domain_err, CoreError, Result};
use crate::models::relu_net::{PatchSet, ReluConvNet};
use crate::rng::stream;
use crate::tensor::dot;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    Empirical,
    Analytic,
}

/// Symmetric n x n patch-kernel matrix, scaled by the retained fraction `q`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub n: usize,
    pub kind: GramKind,
    pub q: f64,
    values: Vec<f64>,
}

impl GramMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// `G_ij = q/(M D^2) sum_r sum_kl <patch_k(x_i), patch_l(x_j)>
///          1{<W_r, patch_k(x_i)> >= 0} 1{<W_r, patch_l(x_j)> >= 0}`.
pub fn gram_empirical(model: &ReluConvNet, patches: &PatchSet) -> GramMatrix {
    let n = patches.samples();
    let d = patches.positions;
    let m = model.filters();
    let q = model.retained_fraction();
    // Indicator table: for each sample, an M x D sign matrix.
    let acts: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut a = vec![0.0; m * d];
            for r in 0..m {
                let w = model.weights.filter(r);
                for k in 0..d {
                    if dot(w, patches.patch(i, k)) >= 0.0 {
                        a[r * d + k] = 1.0;
                    }
                }
            }
            a
        })
        .collect();
    let mut values = vec![0.0; n * n];
    let scale = q / (m as f64 * (d * d) as f64);
    for i in 0..n {
        for j in i..n {
            // counts[k][l] = number of filters active on both (k,i) and (l,j)
            let mut counts = vec![0.0; d * d];
            for r in 0..m {
                let ai = &acts[i][r * d..(r + 1) * d];
                let aj = &acts[j][r * d..(r + 1) * d];
                for k in 0..d {
                    if ai[k] == 1.0 {
                        for l in 0..d {
                            counts[k * d + l] += aj[l];
                        }
                    }
                }
            }
            let mut acc = 0.0;
            for k in 0..d {
                for l in 0..d {
                    acc += dot(patches.patch(i, k), patches.patch(j, l)) * counts[k * d + l];
                }
            }
            let v = scale * acc;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    GramMatrix { n, kind: GramKind::Empirical, q, values }
}

/// Infinite-width expectation:
/// `G_ij = q/D^2 sum_kl <patch_k(x_i), patch_l(x_j)> (pi - theta_kl)/(2 pi)`
/// with `theta` the angle between the patches.
pub fn gram_infty(patches: &PatchSet, q: f64) -> Result<GramMatrix> {
    let n = patches.samples();
    let d = patches.positions;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..d {
                for l in 0..d {
                    let ip = dot(patches.patch(i, k), patches.patch(j, l));
                    let denom = patches.norms[i][k] * patches.norms[j][l];
                    let mut cos = ip / denom;
                    if cos.abs() > 1.0 + 1e-9 {
                        return Err(CoreError::Domain(format!(
                            "cosine {cos} outside [-1, 1] at patches ({i},{k}) x ({j},{l})"
                        )));
                    }
                    cos = cos.clamp(-1.0, 1.0);
                    let theta = cos.acos();
                    acc += ip * (std::f64::consts::PI - theta)
                        / (2.0 * std::f64::consts::PI);
                }
            }
            let v = q / (d * d) as f64 * acc;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, kind: GramKind::Analytic, q, values })
}

/// Smallest eigenvalue via a symmetric eigensolver.
pub fn lambda_min(g: &GramMatrix) -> f64 {
    let m = DMatrix::from_row_slice(g.n, g.n, g.values());
    let eig = m.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Least eigenvalue, rejecting degenerate (non-positive) spectra.
pub fn lambda0(g: &GramMatrix) -> Result<f64> {
    let lam = lambda_min(g);
    if lam <= 0.0 {
        return domain_err(format!(
            "gram matrix is degenerate (least eigenvalue {lam}); dataset rejected"
        ));
    }
    Ok(lam)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GramConcentrationConfig {
    pub filters: usize,
    pub samples: usize,
    pub channels: usize,
    pub half_width: usize,
    pub seeds: u64,
}

impl Default for GramConcentrationConfig {
    fn default() -> Self {
        GramConcentrationConfig { filters: 4096, samples: 8, channels: 4, half_width: 2, seeds: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct GramConcentrationReport {
    /// Per seed: (least eigenvalue of the empirical matrix, analytic lambda0,
    /// whether the 3/4 bound held).
    pub rows: Vec<(u64, f64, f64, bool)>,
    pub passes: usize,
}

/// Draws fresh filter banks over a fixed dataset and counts how often
/// `lambda_min(G(0)) >= 0.75 * lambda0(G_inf)`.
pub fn gram_concentration_experiment(
    cfg: &GramConcentrationConfig,
    run_seed: u64,
) -> Result<GramConcentrationReport> {
    let data = crate::data::normalized_signals(
        &crate::data::SignalDatasetConfig {
            samples: cfg.samples,
            channels: cfg.channels,
            half_width: cfg.half_width,
            sign_labels: true,
        },
        run_seed,
    )?;
    let patches = PatchSet::from_signals(&data.inputs, cfg.half_width)?;
    let lam0 = lambda0(&gram_infty(&patches, 1.0)?)?;
    let mut rows = Vec::with_capacity(cfg.seeds as usize);
    let mut passes = 0;
    for seed in 0..cfg.seeds {
        let mut rng = stream(run_seed, "gram-concentration", seed);
        let model = ReluConvNet::random(cfg.filters, cfg.channels, cfg.half_width, &mut rng);
        let lam_emp = lambda_min(&gram_empirical(&model, &patches));
        let ok = lam_emp >= 0.75 * lam0;
        passes += ok as usize;
        rows.push((seed, lam_emp, lam0, ok));
    }
    Ok(GramConcentrationReport { rows, passes })
}
