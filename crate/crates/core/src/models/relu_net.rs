//! One-hidden-layer ReLU conv net with average pooling and fixed sign output
//! weights, plus its hand-derived gradient.
//!
//! Forward: `f(x) = scale/D * sum_r a_r sum_k relu(<W_r, patch_k(x)>)` where
//! `scale` is `1/sqrt(m)` for the dense net and `sqrt(q)/sqrt(M)` after
//! structured pruning (`q` the retained filter fraction, `M` the surviving
//! filter count). The two coincide when nothing was pruned. The output
//! weights `a` stay fixed throughout training.
//!
//! Indicators use `>= 0`, matching the Gram-matrix definition the training
//! dynamics are checked against.

use crate::error::{domain_err, shape_err, Result};
use crate::params::ParamAccess;
use crate::tensor::{dot, extract_patch, FeatureMap};
use crate::tensor::ConvTensor;
use rand::Rng;

/// Output scaling: dense `1/sqrt(m)` or the pruned form `sqrt(q)/sqrt(M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Dense,
    /// Remembers the pre-pruning filter count so `q = M / original`.
    Pruned { original_filters: usize },
}

#[derive(Debug, Clone)]
pub struct ReluConvNet {
    /// Fixed output signs, each exactly +1 or -1.
    pub signs: Vec<f64>,
    /// Filter bank, `filters x channels x (2s+1)`.
    pub weights: ConvTensor,
    pub scale: ScaleMode,
}

impl ReluConvNet {
    /// Standard-normal filters and uniform +-1 signs.
    pub fn random(filters: usize, channels: usize, half_width: usize, rng: &mut impl Rng) -> Self {
        let weights = ConvTensor::random(filters, channels, half_width, 1.0, rng);
        let signs = (0..filters).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        ReluConvNet { signs, weights, scale: ScaleMode::Dense }
    }

    pub fn filters(&self) -> usize {
        self.weights.out_channels
    }

    /// Retained filter fraction `q` (1 for dense nets).
    pub fn retained_fraction(&self) -> f64 {
        match self.scale {
            ScaleMode::Dense => 1.0,
            ScaleMode::Pruned { original_filters } => self.filters() as f64 / original_filters as f64,
        }
    }

    /// The prefactor in front of `1/D * sum_r a_r sum_k relu(...)`.
    pub fn scale_factor(&self) -> f64 {
        match self.scale {
            ScaleMode::Dense => 1.0 / (self.filters() as f64).sqrt(),
            ScaleMode::Pruned { .. } => {
                self.retained_fraction().sqrt() / (self.filters() as f64).sqrt()
            }
        }
    }

    /// Scalar output on one input signal.
    pub fn forward(&self, x: &FeatureMap) -> Result<f64> {
        if x.channels != self.weights.in_channels {
            return shape_err(format!(
                "network expects {} channels, input has {}",
                self.weights.in_channels, x.channels
            ));
        }
        let pf = self.scale_factor() / x.len as f64;
        let mut acc = 0.0;
        for k in 0..x.len {
            let patch = extract_patch(x, self.weights.half_width, k)?;
            for r in 0..self.filters() {
                let z = dot(self.weights.filter(r), patch.values());
                if z > 0.0 {
                    acc += self.signs[r] * z;
                }
            }
        }
        Ok(pf * acc)
    }

    /// Outputs over a precomputed patch set, one value per sample.
    pub fn outputs(&self, patches: &PatchSet) -> Vec<f64> {
        let pf = self.scale_factor() / patches.positions as f64;
        let dim = patches.dim;
        let mut out = Vec::with_capacity(patches.samples());
        for sample in &patches.data {
            let mut acc = 0.0;
            for r in 0..self.filters() {
                let w = self.weights.filter(r);
                let mut filter_acc = 0.0;
                for k in 0..patches.positions {
                    let z = dot(w, &sample[k * dim..(k + 1) * dim]);
                    if z > 0.0 {
                        filter_acc += z;
                    }
                }
                acc += self.signs[r] * filter_acc;
            }
            out.push(pf * acc);
        }
        out
    }

    /// Squared-error loss `1/2 sum_i (F_i - y_i)^2` and its gradient with
    /// respect to the filter bank; the signs are never updated.
    pub fn loss_and_grad(&self, patches: &PatchSet, labels: &[f64]) -> Result<(f64, ConvTensor)> {
        if patches.samples() == 0 {
            return domain_err("loss needs a nonempty dataset");
        }
        if patches.samples() != labels.len() {
            return shape_err(format!(
                "{} samples but {} labels",
                patches.samples(),
                labels.len()
            ));
        }
        let outputs = self.outputs(patches);
        let loss = 0.5
            * outputs
                .iter()
                .zip(labels)
                .map(|(f, y)| (f - y) * (f - y))
                .sum::<f64>();
        let pf = self.scale_factor() / patches.positions as f64;
        let dim = patches.dim;
        let mut grad = ConvTensor::zeros(
            self.filters(),
            self.weights.in_channels,
            self.weights.half_width,
        );
        for (i, sample) in patches.data.iter().enumerate() {
            let residual = outputs[i] - labels[i];
            if residual == 0.0 {
                continue;
            }
            for r in 0..self.filters() {
                let w = self.weights.filter(r);
                let coeff = pf * residual * self.signs[r];
                let g = grad.filter_mut(r);
                for k in 0..patches.positions {
                    let patch = &sample[k * dim..(k + 1) * dim];
                    if dot(w, patch) >= 0.0 {
                        for (gv, pv) in g.iter_mut().zip(patch) {
                            *gv += coeff * pv;
                        }
                    }
                }
            }
        }
        Ok((loss, grad))
    }
}

impl ParamAccess for ReluConvNet {
    fn group_names(&self) -> Vec<String> {
        vec!["filters".to_string()]
    }
    fn group(&self, name: &str) -> &[f64] {
        assert_eq!(name, "filters");
        self.weights.values()
    }
    fn group_mut(&mut self, name: &str) -> &mut [f64] {
        assert_eq!(name, "filters");
        self.weights.values_mut()
    }
    fn is_frozen(&self, _name: &str) -> bool {
        false
    }
    fn is_prunable(&self, _name: &str) -> bool {
        true
    }
}

/// All circular patches of a set of 1D signals, flattened for tight loops.
#[derive(Debug, Clone)]
pub struct PatchSet {
    /// Patch dimension `channels * (2s+1)`.
    pub dim: usize,
    /// Patches per sample (= signal length D).
    pub positions: usize,
    /// Per sample, `positions * dim` values, patch-major.
    pub data: Vec<Vec<f64>>,
    /// Norm of every patch, same layout.
    pub norms: Vec<Vec<f64>>,
}

impl PatchSet {
    pub fn from_signals(signals: &[FeatureMap], half_width: usize) -> Result<Self> {
        if signals.is_empty() {
            return domain_err("patch set needs at least one signal");
        }
        let d = signals[0].len;
        let dim = signals[0].channels * (2 * half_width + 1);
        let mut data = Vec::with_capacity(signals.len());
        let mut norms = Vec::with_capacity(signals.len());
        for x in signals {
            if x.len != d || x.channels != signals[0].channels {
                return shape_err("signals in a patch set share one shape");
            }
            let mut flat = Vec::with_capacity(d * dim);
            let mut ns = Vec::with_capacity(d);
            for k in 0..d {
                let p = extract_patch(x, half_width, k)?;
                ns.push(p.norm());
                flat.extend_from_slice(p.values());
            }
            data.push(flat);
            norms.push(ns);
        }
        Ok(PatchSet { dim, positions: d, data, norms })
    }

    pub fn samples(&self) -> usize {
        self.data.len()
    }

    pub fn patch(&self, sample: usize, k: usize) -> &[f64] {
        &self.data[sample][k * self.dim..(k + 1) * self.dim]
    }

    /// Largest over smallest patch norm, the constant the unnormalized
    /// analysis depends on.
    pub fn norm_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for ns in &self.norms {
            for &n in ns {
                lo = lo.min(n);
                hi = hi.max(n);
            }
        }
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::{avg_pool, circ_conv};

    fn unit_signals(n: usize, channels: usize, d: usize, seed: u64) -> Vec<FeatureMap> {
        let mut rng = stream(seed, "relu-test", 0);
        (0..n)
            .map(|_| {
                let mut x = FeatureMap::random(channels, d, &mut rng);
                x.normalize().unwrap();
                x
            })
            .collect()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = stream(2, "relu-test", 1);
        let mut net = ReluConvNet::random(8, 2, 1, &mut rng);
        for w in net.weights.values_mut() {
            *w = 0.0;
        }
        let x = FeatureMap::random(2, 5, &mut rng);
        assert_eq!(net.forward(&x).unwrap(), 0.0);
    }

    #[test]
    fn forward_matches_pooled_conv_route() {
        // Second algebraic route: relu(conv) -> avg pool -> signed sum.
        let mut rng = stream(2, "relu-test", 2);
        let net = ReluConvNet::random(6, 3, 2, &mut rng);
        let x = FeatureMap::random(3, 7, &mut rng);
        let conv = circ_conv(&net.weights, &x).unwrap();
        let mut rect = conv.clone();
        for v in rect.values_mut() {
            *v = v.max(0.0);
        }
        let pooled = avg_pool(&rect).unwrap();
        let expect: f64 =
            net.scale_factor() * pooled.iter().zip(&net.signs).map(|(p, a)| p * a).sum::<f64>();
        assert!((net.forward(&x).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn linear_regime_matches_direct_computation() {
        // All pre-activations positive: the net is linear and equals the
        // pooled-conv expression without the rectifier.
        let mut rng = stream(2, "relu-test", 3);
        let mut net = ReluConvNet::random(4, 2, 1, &mut rng);
        // Positive weights + positive inputs force positive pre-activations.
        for w in net.weights.values_mut() {
            *w = w.abs() + 0.1;
        }
        let x = FeatureMap::from_values(2, 5, (0..10).map(|i| 0.2 + i as f64 * 0.05).collect())
            .unwrap();
        let conv = circ_conv(&net.weights, &x).unwrap();
        let pooled = avg_pool(&conv).unwrap();
        let linear: f64 =
            net.scale_factor() * pooled.iter().zip(&net.signs).map(|(p, a)| p * a).sum::<f64>();
        assert!((net.forward(&x).unwrap() - linear).abs() < 1e-12);
    }

    #[test]
    fn scale_modes_coincide_when_nothing_pruned() {
        let mut rng = stream(2, "relu-test", 4);
        let mut net = ReluConvNet::random(10, 2, 2, &mut rng);
        let x = FeatureMap::random(2, 5, &mut rng);
        let dense = net.forward(&x).unwrap();
        net.scale = ScaleMode::Pruned { original_filters: 10 };
        let pruned = net.forward(&x).unwrap();
        assert!((dense - pruned).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_means_zero_loss_and_grad() {
        let mut rng = stream(2, "relu-test", 5);
        let net = ReluConvNet::random(8, 2, 2, &mut rng);
        let signals = unit_signals(4, 2, 5, 3);
        let patches = PatchSet::from_signals(&signals, 2).unwrap();
        let labels = net.outputs(&patches);
        let (loss, grad) = net.loss_and_grad(&patches, &labels).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn per_filter_grad_norm_bound() {
        // ||dL/dW_r|| <= sqrt(q n / M) * ||F - y|| on normalized patches.
        let mut rng = stream(2, "relu-test", 6);
        for trial in 0..5 {
            let net = ReluConvNet::random(16, 3, 2, &mut rng);
            let signals = unit_signals(6, 3, 5, 10 + trial);
            let patches = PatchSet::from_signals(&signals, 2).unwrap();
            let labels: Vec<f64> = (0..6).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let (_, grad) = net.loss_and_grad(&patches, &labels).unwrap();
            let outputs = net.outputs(&patches);
            let residual: f64 = outputs
                .iter()
                .zip(&labels)
                .map(|(f, y)| (f - y) * (f - y))
                .sum::<f64>()
                .sqrt();
            let n = 6.0;
            let m = 16.0;
            let q = net.retained_fraction();
            let bound = (q * n / m).sqrt() * residual;
            for r in 0..16 {
                let g = crate::tensor::l2_norm(grad.filter(r));
                assert!(g <= bound + 1e-12, "filter {r}: {g} > {bound}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_kinks() {
        let mut rng = stream(2, "relu-test", 7);
        let net = ReluConvNet::random(6, 2, 1, &mut rng);
        let signals = unit_signals(3, 2, 3, 21);
        let patches = PatchSet::from_signals(&signals, 1).unwrap();
        let labels = vec![0.7, -0.3, 1.1];
        let (_, grad) = net.loss_and_grad(&patches, &labels).unwrap();

        let eps = 1e-6;
        let mut worst = 0.0f64;
        let mut checked = 0;
        for idx in 0..net.weights.values().len() {
            let eval = |delta: f64| {
                let mut pert = net.clone();
                pert.weights.values_mut()[idx] += delta;
                let out = pert.outputs(&patches);
                let loss: f64 = 0.5
                    * out.iter().zip(&labels).map(|(f, y)| (f - y) * (f - y)).sum::<f64>();
                // smallest |pre-activation| controls kink proximity
                let mut min_abs = f64::INFINITY;
                for sample in &patches.data {
                    for k in 0..patches.positions {
                        for r in 0..6 {
                            let z = dot(
                                pert.weights.filter(r),
                                &sample[k * patches.dim..(k + 1) * patches.dim],
                            );
                            min_abs = min_abs.min(z.abs());
                        }
                    }
                }
                (loss, min_abs)
            };
            let (lp, mp) = eval(eps);
            let (lm, mm) = eval(-eps);
            if mp.min(mm) < 100.0 * eps {
                continue; // too close to a rectifier kink for central differences
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = grad.values()[idx];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
        assert!(checked > 20, "kink filter skipped almost everything");
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn patch_set_records_unit_norms_for_full_window() {
        let signals = unit_signals(4, 3, 5, 30);
        let patches = PatchSet::from_signals(&signals, 2).unwrap();
        assert!((patches.norm_ratio() - 1.0).abs() < 1e-12);
        for ns in &patches.norms {
            for &n in ns {
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }
}
