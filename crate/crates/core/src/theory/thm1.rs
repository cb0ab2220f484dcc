//! Scaling-law sweep: prune every layer of a random linear conv net by
//! smallest |kernel sum| at rate p, then measure how much the pooled output
//! and the full feature map move. Across a grid of p values the pooled ratio
//! grows like p^(3/2) and the map ratio like p^(1/2); the fitted log-log
//! slopes are the experiment's product.

use crate::error::{domain_err, Result};
use crate::models::LinearConvNet;
use crate::pruning::kernel_sum_prune;
use crate::rng::stream;
use crate::tensor::{avg_pool, l2_norm, FeatureMap};
use rayon::prelude::*;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Theorem1Config {
    /// Number of conv layers (all `width x width x (2s+1)`).
    pub layers: usize,
    pub width: usize,
    pub half_width: usize,
    pub spatial_len: usize,
    /// Std of the i.i.d. normal initialization.
    pub init_std: f64,
    pub p_grid: Vec<f64>,
    pub seeds: u64,
    pub inputs_per_trial: usize,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            layers: 3,
            width: 64,
            half_width: 2,
            spatial_len: 64,
            init_std: 1.0,
            p_grid: (1..=10).map(|i| i as f64 / 100.0).collect(),
            seeds: 20,
            inputs_per_trial: 2,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScalingPoint {
    pub seed: u64,
    pub p: f64,
    pub pooled_ratio: f64,
    pub map_ratio: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub pooled_slope: f64,
    pub pooled_intercept: f64,
    pub map_slope: f64,
    pub map_intercept: f64,
    pub config: Theorem1Config,
}

impl ScalingReport {
    /// Mean ratios over seeds at each grid point, in grid order.
    pub fn seed_means(&self) -> Vec<(f64, f64, f64)> {
        self.config
            .p_grid
            .iter()
            .map(|&p| {
                let at: Vec<&ScalingPoint> =
                    self.points.iter().filter(|pt| pt.p == p).collect();
                let n = at.len() as f64;
                (
                    p,
                    at.iter().map(|pt| pt.pooled_ratio).sum::<f64>() / n,
                    at.iter().map(|pt| pt.map_ratio).sum::<f64>() / n,
                )
            })
            .collect()
    }
}

/// Least-squares slope and intercept of y against x.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    let slope = num / den;
    (slope, my - slope * mx)
}

pub fn theorem1_experiment(cfg: &Theorem1Config, run_seed: u64) -> Result<ScalingReport> {
    if cfg.p_grid.is_empty() || cfg.p_grid.iter().any(|&p| p <= 0.0 || p >= 0.11) {
        return domain_err("p grid must lie strictly inside (0, 0.11)");
    }
    if cfg.layers == 0 || cfg.seeds == 0 || cfg.inputs_per_trial == 0 {
        return domain_err("layers, seeds and inputs must be positive");
    }
    let grid_len = cfg.p_grid.len() as u64;
    let trials: Vec<(u64, usize)> = (0..cfg.seeds)
        .flat_map(|s| (0..cfg.p_grid.len()).map(move |pi| (s, pi)))
        .collect();
    let mut points: Vec<ScalingPoint> = trials
        .par_iter()
        .map(|&(seed, pi)| -> Result<ScalingPoint> {
            let p = cfg.p_grid[pi];
            let mut rng = stream(run_seed, "thm1", seed * grid_len + pi as u64);
            let widths = vec![cfg.width; cfg.layers + 1];
            let net =
                LinearConvNet::random(&widths, cfg.half_width, cfg.init_std, &mut rng)?;
            let pruned_layers: Vec<_> = net
                .layers
                .iter()
                .map(|w| kernel_sum_prune(w, p).map(|(t, _)| t))
                .collect::<Result<_>>()?;
            let pruned = LinearConvNet::new(pruned_layers)?;
            let mut pooled_acc = 0.0;
            let mut map_acc = 0.0;
            for _ in 0..cfg.inputs_per_trial {
                let x = FeatureMap::random(cfg.width, cfg.spatial_len, &mut rng);
                let dense = net.forward(&x)?;
                let cut = pruned.forward(&x)?;
                let dense_pool = avg_pool(&dense)?;
                let cut_pool = avg_pool(&cut)?;
                let pool_diff: f64 = dense_pool
                    .iter()
                    .zip(&cut_pool)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                pooled_acc += pool_diff / l2_norm(&dense_pool);
                let map_diff: f64 = dense
                    .values()
                    .iter()
                    .zip(cut.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                map_acc += map_diff / dense.norm();
            }
            Ok(ScalingPoint {
                seed,
                p,
                pooled_ratio: pooled_acc / cfg.inputs_per_trial as f64,
                map_ratio: map_acc / cfg.inputs_per_trial as f64,
            })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| a.seed.cmp(&b.seed).then(a.p.total_cmp(&b.p)));

    // Fit on seed-averaged curves in log-log space.
    let mut report = ScalingReport {
        points,
        pooled_slope: 0.0,
        pooled_intercept: 0.0,
        map_slope: 0.0,
        map_intercept: 0.0,
        config: cfg.clone(),
    };
    let means = report.seed_means();
    let xs: Vec<f64> = means.iter().map(|(p, _, _)| p.ln()).collect();
    let pooled: Vec<f64> = means.iter().map(|(_, pr, _)| pr.ln()).collect();
    let map: Vec<f64> = means.iter().map(|(_, _, mr)| mr.ln()).collect();
    (report.pooled_slope, report.pooled_intercept) = fit_line(&xs, &pooled);
    (report.map_slope, report.map_intercept) = fit_line(&xs, &map);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishing_rate_leaves_ratios_at_zero() {
        // p small enough that floor(p * kernels) = 0 prunes nothing.
        let cfg = Theorem1Config {
            layers: 2,
            width: 8,
            spatial_len: 16,
            p_grid: vec![0.01],
            seeds: 2,
            inputs_per_trial: 1,
            ..Default::default()
        };
        // 8x8 = 64 kernels per layer; floor(0.01 * 64) = 0.
        let report = theorem1_experiment(&cfg, 7).unwrap();
        for pt in &report.points {
            assert_eq!(pt.pooled_ratio, 0.0);
            assert_eq!(pt.map_ratio, 0.0);
        }
    }

    #[test]
    fn rejects_rates_outside_hypothesis() {
        let cfg = Theorem1Config { p_grid: vec![0.2], ..Default::default() };
        assert!(theorem1_experiment(&cfg, 1).is_err());
    }

    #[test]
    fn single_layer_squared_map_ratio_tracks_closed_form() {
        // One pruned layer: the expected squared map ratio is 1 - (1-p) = p,
        // up to the rank-selection conditioning which removes a 1/(2s+1)
        // share; s = 3 keeps that within the 20% tolerance.
        let cfg = Theorem1Config {
            layers: 1,
            width: 48,
            half_width: 3,
            spatial_len: 48,
            p_grid: vec![0.1],
            seeds: 24,
            inputs_per_trial: 2,
            ..Default::default()
        };
        let report = theorem1_experiment(&cfg, 11).unwrap();
        let mean_sq: f64 = report
            .points
            .iter()
            .map(|pt| pt.map_ratio * pt.map_ratio)
            .sum::<f64>()
            / report.points.len() as f64;
        let rel = (mean_sq - 0.1).abs() / 0.1;
        assert!(rel < 0.2, "mean squared map ratio {mean_sq} vs 0.1 (rel {rel})");
    }

    #[test]
    fn ratios_grow_with_rate_on_seed_averages() {
        let cfg = Theorem1Config {
            layers: 2,
            width: 24,
            spatial_len: 24,
            p_grid: vec![0.02, 0.05, 0.08],
            seeds: 6,
            inputs_per_trial: 1,
            ..Default::default()
        };
        let report = theorem1_experiment(&cfg, 3).unwrap();
        let means = report.seed_means();
        for pair in means.windows(2) {
            assert!(pair[1].1 >= pair[0].1, "pooled ratio not monotone: {means:?}");
            assert!(pair[1].2 >= pair[0].2, "map ratio not monotone: {means:?}");
        }
    }

    #[test]
    fn deterministic_for_fixed_run_seed() {
        let cfg = Theorem1Config {
            layers: 2,
            width: 12,
            spatial_len: 12,
            p_grid: vec![0.05, 0.1],
            seeds: 3,
            inputs_per_trial: 1,
            ..Default::default()
        };
        let a = theorem1_experiment(&cfg, 99).unwrap();
        let b = theorem1_experiment(&cfg, 99).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(x.pooled_ratio.to_bits(), y.pooled_ratio.to_bits());
            assert_eq!(x.map_ratio.to_bits(), y.map_ratio.to_bits());
        }
        assert_eq!(a.pooled_slope.to_bits(), b.pooled_slope.to_bits());
    }
}
