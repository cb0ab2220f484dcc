//! Channelwise DFT and the Fourier form of linear conv nets.
//!
//! Convention: forward transform `x~(k) = (1/D) sum_s x_s exp(-2pi i sk/D)`,
//! inverse `x_s = sum_k x~(k) exp(+2pi i sk/D)`, so inverse(forward) is the
//! identity and Parseval reads `||x||^2 = D * sum_k |x~(k)|^2`. Spectral
//! kernels use the opposite sign, `W~(k)_{ij} = sum_s w_{ij,s} exp(+2pi i sk/D)`,
//! which makes the convolution theorem `conv(W,x)~(k) = W~(k) x~(k)` hold
//! exactly. A same-sign forward/inverse pair would compose to a spatial
//! reflection instead of the identity, so it is not offered.
//!
//! The transform is the naive O(D^2) sum; lengths stay small here and the
//! direct sum keeps the round-trip and Parseval constants easy to audit.

use crate::error::{shape_err, Result};
use crate::tensor::{ConvTensor, FeatureMap};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// DFT coefficients of a feature map, `channels x len`, forward convention as
/// documented at module level.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub channels: usize,
    pub len: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn get(&self, channel: usize, k: usize) -> Complex64 {
        self.coeffs[channel * self.len + k]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }
}

/// The frequency-`k` response matrix `W~(k)`, `out_channels x in_channels`.
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    values: Vec<Complex64>,
}

impl SpectralKernel {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.in_channels + j]
    }

    /// Matrix-vector product against one frequency of a spectrum.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.out_channels)
            .map(|i| {
                (0..self.in_channels)
                    .map(|j| self.get(i, j) * v[j])
                    .sum()
            })
            .collect()
    }
}

pub fn dft_forward(x: &FeatureMap) -> Spectrum {
    let d = x.len;
    let mut coeffs = Vec::with_capacity(x.channels * d);
    for c in 0..x.channels {
        let xc = x.channel(c);
        for k in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for (s, &v) in xc.iter().enumerate() {
                let phase = -TAU * (s as f64) * (k as f64) / d as f64;
                acc += v * Complex64::from_polar(1.0, phase);
            }
            coeffs.push(acc / d as f64);
        }
    }
    Spectrum { channels: x.channels, len: d, coeffs }
}

pub fn dft_inverse(spec: &Spectrum) -> FeatureMap {
    let d = spec.len;
    let mut out = FeatureMap::zeros(spec.channels, d);
    for c in 0..spec.channels {
        for s in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..d {
                let phase = TAU * (s as f64) * (k as f64) / d as f64;
                acc += spec.get(c, k) * Complex64::from_polar(1.0, phase);
            }
            out.set(c, s, acc.re);
        }
    }
    out
}

/// `W~(k)_{ij} = sum_s w_{ij,s} exp(+2pi i sk/D)`, taps `s in -s..=s`.
pub fn spectral_kernel(w: &ConvTensor, k: usize, d: usize) -> SpectralKernel {
    let half = w.half_width as i64;
    let mut values = Vec::with_capacity(w.out_channels * w.in_channels);
    for i in 0..w.out_channels {
        for j in 0..w.in_channels {
            let kernel = w.kernel(i, j);
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &wv) in kernel.iter().enumerate() {
                let s = t as i64 - half;
                let phase = TAU * (s as f64) * (k as f64) / d as f64;
                acc += wv * Complex64::from_polar(1.0, phase);
            }
            values.push(acc);
        }
    }
    SpectralKernel { out_channels: w.out_channels, in_channels: w.in_channels, values }
}

/// Evaluates a stack of circular conv layers through the frequency domain:
/// `out[:, p] = sum_k W_L(k) ... W_0(k) x~(k) exp(+2pi i pk/D)`.
///
/// Must agree with the composed direct convolutions; the imaginary residue of
/// the final sum is dropped (it vanishes to rounding for real inputs).
pub fn lcnn_spectral_eval(layers: &[ConvTensor], x: &FeatureMap) -> Result<FeatureMap> {
    if layers.is_empty() {
        return shape_err("spectral evaluation needs at least one layer");
    }
    let mut channels = x.channels;
    for (idx, layer) in layers.iter().enumerate() {
        if layer.in_channels != channels {
            return shape_err(format!(
                "layer {idx} expects {} channels, chain provides {channels}",
                layer.in_channels
            ));
        }
        channels = layer.out_channels;
    }
    let d = x.len;
    let spec = dft_forward(x);
    let out_channels = layers.last().unwrap().out_channels;
    let mut out = FeatureMap::zeros(out_channels, d);
    for k in 0..d {
        let mut v: Vec<Complex64> = (0..x.channels).map(|c| spec.get(c, k)).collect();
        for layer in layers {
            v = spectral_kernel(layer, k, d).apply(&v);
        }
        for (c, coeff) in v.iter().enumerate() {
            for p in 0..d {
                let phase = TAU * (p as f64) * (k as f64) / d as f64;
                let term = coeff * Complex64::from_polar(1.0, phase);
                out.set(c, p, out.get(c, p) + term.re);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::{avg_pool, circ_conv};

    #[test]
    fn constant_signal_is_pure_zero_frequency() {
        let x = FeatureMap::from_values(1, 6, vec![2.5; 6]).unwrap();
        let s = dft_forward(&x);
        assert!((s.get(0, 0).re - 2.5).abs() < 1e-12);
        for k in 1..6 {
            assert!(s.get(0, k).norm() < 1e-12);
        }
    }

    #[test]
    fn delta_spreads_uniformly() {
        let x = FeatureMap::from_values(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let s = dft_forward(&x);
        for k in 0..4 {
            assert!((s.get(0, k).re - 0.25).abs() < 1e-12);
            assert!(s.get(0, k).im.abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_identity() {
        let mut rng = stream(3, "spectral-test", 0);
        for _ in 0..5 {
            let x = FeatureMap::random(3, 11, &mut rng);
            let back = dft_inverse(&dft_forward(&x));
            for (a, b) in x.values().iter().zip(back.values()) {
                assert!((a - b).abs() < 1e-12 * x.norm().max(1.0));
            }
        }
    }

    #[test]
    fn hermitian_symmetry_for_real_input() {
        let mut rng = stream(3, "spectral-test", 1);
        let x = FeatureMap::random(2, 8, &mut rng);
        let s = dft_forward(&x);
        for c in 0..2 {
            for k in 1..8 {
                let a = s.get(c, k);
                let b = s.get(c, 8 - k).conj();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_with_documented_constant() {
        let mut rng = stream(3, "spectral-test", 2);
        let x = FeatureMap::random(2, 9, &mut rng);
        let s = dft_forward(&x);
        let spectral: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum();
        let spatial = x.norm() * x.norm();
        assert!((spatial - 9.0 * spectral).abs() < 1e-9);
    }

    #[test]
    fn zero_frequency_kernel_is_real_sum() {
        let mut rng = stream(5, "spectral-test", 3);
        let w = ConvTensor::random(3, 2, 2, 1.0, &mut rng);
        let sk = spectral_kernel(&w, 0, 10);
        for i in 0..3 {
            for j in 0..2 {
                let e = sk.get(i, j);
                assert!((e.re - w.kernel_sum(i, j)).abs() < 1e-12);
                assert!(e.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pointwise_kernel_is_frequency_independent() {
        let mut rng = stream(5, "spectral-test", 4);
        let w = ConvTensor::random(2, 2, 0, 1.0, &mut rng);
        let d = 7;
        let base = spectral_kernel(&w, 0, d);
        for k in 1..d {
            let sk = spectral_kernel(&w, k, d);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((sk.get(i, j) - base.get(i, j)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn convolution_theorem() {
        let mut rng = stream(7, "spectral-test", 5);
        let w = ConvTensor::random(3, 2, 2, 1.0, &mut rng);
        let x = FeatureMap::random(2, 12, &mut rng);
        let y = circ_conv(&w, &x).unwrap();
        let sx = dft_forward(&x);
        let sy = dft_forward(&y);
        for k in 0..12 {
            let sk = spectral_kernel(&w, k, 12);
            let v: Vec<_> = (0..2).map(|c| sx.get(c, k)).collect();
            let prod = sk.apply(&v);
            for c in 0..3 {
                let err = (sy.get(c, k) - prod[c]).norm();
                assert!(err < 1e-10 * y.norm().max(1.0), "freq {k} channel {c}: {err}");
            }
        }
    }

    #[test]
    fn single_layer_spectral_matches_direct() {
        let mut rng = stream(7, "spectral-test", 6);
        let w = ConvTensor::random(2, 2, 1, 1.0, &mut rng);
        let x = FeatureMap::random(2, 6, &mut rng);
        let direct = circ_conv(&w, &x).unwrap();
        let spectral = lcnn_spectral_eval(std::slice::from_ref(&w), &x).unwrap();
        for (a, b) in direct.values().iter().zip(spectral.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn three_layer_spectral_matches_direct() {
        let mut rng = stream(7, "spectral-test", 7);
        let layers = vec![
            ConvTensor::random(4, 2, 2, 1.0, &mut rng),
            ConvTensor::random(3, 4, 2, 1.0, &mut rng),
            ConvTensor::random(2, 3, 2, 1.0, &mut rng),
        ];
        let x = FeatureMap::random(2, 16, &mut rng);
        let mut direct = x.clone();
        for l in &layers {
            direct = circ_conv(l, &direct).unwrap();
        }
        let spectral = lcnn_spectral_eval(&layers, &x).unwrap();
        let scale = direct.norm();
        for (a, b) in direct.values().iter().zip(spectral.values()) {
            assert!((a - b).abs() < 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn pooled_output_is_zero_frequency_product() {
        // avg_pool(conv(W, x)) equals W~(0) applied to avg_pool(x).
        let mut rng = stream(7, "spectral-test", 8);
        let w = ConvTensor::random(3, 2, 1, 1.0, &mut rng);
        let x = FeatureMap::random(2, 8, &mut rng);
        let pooled_conv = avg_pool(&circ_conv(&w, &x).unwrap()).unwrap();
        let pooled_x = avg_pool(&x).unwrap();
        for i in 0..3 {
            let direct: f64 = (0..2).map(|j| w.kernel_sum(i, j) * pooled_x[j]).sum();
            assert!((pooled_conv[i] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn avg_pool_equals_zero_frequency_coefficient() {
        let mut rng = stream(7, "spectral-test", 9);
        let x = FeatureMap::random(3, 10, &mut rng);
        let pooled = avg_pool(&x).unwrap();
        let s = dft_forward(&x);
        for c in 0..3 {
            assert!((pooled[c] - s.get(c, 0).re).abs() < 1e-12);
            assert!(s.get(c, 0).im.abs() < 1e-12);
        }
    }

    #[test]
    fn pruning_a_kernel_is_a_rank_update_at_every_frequency() {
        let mut rng = stream(7, "spectral-test", 10);
        let w = ConvTensor::random(3, 3, 2, 1.0, &mut rng);
        let d = 9;
        let (pi, pj) = (1, 2);
        let mut pruned = w.clone();
        for t in pruned.kernel_mut(pi, pj) {
            *t = 0.0;
        }
        for k in 0..d {
            let full = spectral_kernel(&w, k, d);
            let cut = spectral_kernel(&pruned, k, d);
            for i in 0..3 {
                for j in 0..3 {
                    let expected = if (i, j) == (pi, pj) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        full.get(i, j)
                    };
                    assert!((cut.get(i, j) - expected).norm() < 1e-12);
                }
            }
        }
    }
}
