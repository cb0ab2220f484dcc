//! Dense arrays, circular convolution, pooling, patch extraction and the
//! normalized l2 distance.
//!
//! Spatial indexing is circular everywhere: index `j + D` aliases `j`. The
//! wrap is done by modular arithmetic, never by materialized padding. 1D maps
//! carry the theory experiments; 2D images (circular on both axes) carry the
//! autoencoder.

use crate::error::{domain_err, shape_err, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Third-order convolution weight tensor, `out_channels x in_channels x (2s+1)`.
///
/// The kernel width is always odd; `half_width` is `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTensor {
    pub out_channels: usize,
    pub in_channels: usize,
    pub half_width: usize,
    weights: Vec<f64>,
}

impl ConvTensor {
    pub fn zeros(out_channels: usize, in_channels: usize, half_width: usize) -> Self {
        let len = out_channels * in_channels * (2 * half_width + 1);
        ConvTensor { out_channels, in_channels, half_width, weights: vec![0.0; len] }
    }

    /// Entries drawn i.i.d. from a centered normal with standard deviation `std`.
    pub fn random(
        out_channels: usize,
        in_channels: usize,
        half_width: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be positive and finite");
        let len = out_channels * in_channels * (2 * half_width + 1);
        ConvTensor {
            out_channels,
            in_channels,
            half_width,
            weights: (0..len).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn from_values(
        out_channels: usize,
        in_channels: usize,
        half_width: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let expect = out_channels * in_channels * (2 * half_width + 1);
        if weights.len() != expect {
            return shape_err(format!(
                "conv tensor expects {expect} weights, got {}",
                weights.len()
            ));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return domain_err("conv tensor entries must be finite");
        }
        Ok(ConvTensor { out_channels, in_channels, half_width, weights })
    }

    pub fn kernel_width(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Kernel row for channel pair `(i, j)`, tap order `-s..=s`.
    pub fn kernel(&self, i: usize, j: usize) -> &[f64] {
        let k = self.kernel_width();
        let base = (i * self.in_channels + j) * k;
        &self.weights[base..base + k]
    }

    pub fn kernel_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = self.kernel_width();
        let base = (i * self.in_channels + j) * k;
        &mut self.weights[base..base + k]
    }

    /// Sum of the taps of kernel `(i, j)` — its zero-frequency response.
    pub fn kernel_sum(&self, i: usize, j: usize) -> f64 {
        self.kernel(i, j).iter().sum()
    }

    /// Filter `i` flattened as `in_channels x (2s+1)` row-major.
    pub fn filter(&self, i: usize) -> &[f64] {
        let len = self.in_channels * self.kernel_width();
        &self.weights[i * len..(i + 1) * len]
    }

    pub fn filter_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.in_channels * self.kernel_width();
        &mut self.weights[i * len..(i + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.weights)
    }
}

/// Channel-first activation array `channels x len` with circular spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub len: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, len: usize) -> Self {
        FeatureMap { channels, len, values: vec![0.0; channels * len] }
    }

    pub fn from_values(channels: usize, len: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * len {
            return shape_err(format!(
                "feature map expects {} values, got {}",
                channels * len,
                values.len()
            ));
        }
        Ok(FeatureMap { channels, len, values })
    }

    pub fn random(channels: usize, len: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 1.0).unwrap();
        FeatureMap {
            channels,
            len,
            values: (0..channels * len).map(|_| normal.sample(rng)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, channel: usize, pos: usize) -> f64 {
        self.values[channel * self.len + pos]
    }

    /// Circular read: any integer position is reduced modulo the length.
    #[inline]
    pub fn get_circ(&self, channel: usize, pos: i64) -> f64 {
        let d = self.len as i64;
        self.values[channel * self.len + pos.rem_euclid(d) as usize]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, pos: usize, v: f64) {
        self.values[channel * self.len + pos] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// New map with every channel circularly shifted by `offset` positions.
    pub fn shifted(&self, offset: i64) -> FeatureMap {
        let mut out = FeatureMap::zeros(self.channels, self.len);
        for c in 0..self.channels {
            for j in 0..self.len {
                out.set(c, j, self.get_circ(c, j as i64 - offset));
            }
        }
        out
    }

    /// Rescale so the whole map has unit l2 norm.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return domain_err("cannot normalize a zero feature map");
        }
        for v in &mut self.values {
            *v /= n;
        }
        Ok(())
    }
}

/// The `c x (2s+1)` window of a feature map around one position.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub channels: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl PatchMatrix {
    #[inline]
    pub fn get(&self, channel: usize, tap: usize) -> f64 {
        self.values[channel * self.width + tap]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

/// Circular convolution of Eq-style semantics:
/// `out[i][j] = sum_k sum_l w[i][k][l] * x[k][j+l]`, taps `l in -s..=s`.
pub fn circ_conv(w: &ConvTensor, x: &FeatureMap) -> Result<FeatureMap> {
    if w.in_channels != x.channels {
        return shape_err(format!(
            "conv expects {} input channels, feature map has {}",
            w.in_channels, x.channels
        ));
    }
    if x.len < 1 {
        return domain_err("feature map must have positive length");
    }
    let d = x.len;
    let s = w.half_width as i64;
    let mut out = FeatureMap::zeros(w.out_channels, d);
    for i in 0..w.out_channels {
        let row = &mut out.values_mut()[i * d..(i + 1) * d];
        for k in 0..x.channels {
            let kernel = w.kernel(i, k);
            let xc = x.channel(k);
            for (l, &wv) in kernel.iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                let off = l as i64 - s;
                for (j, r) in row.iter_mut().enumerate() {
                    let src = (j as i64 + off).rem_euclid(d as i64) as usize;
                    *r += wv * xc[src];
                }
            }
        }
    }
    Ok(out)
}

/// Mean over the spatial axis, one value per channel.
pub fn avg_pool(v: &FeatureMap) -> Result<Vec<f64>> {
    if v.len == 0 || v.channels == 0 {
        return domain_err("avg_pool needs a nonempty feature map");
    }
    Ok((0..v.channels)
        .map(|c| v.channel(c).iter().sum::<f64>() / v.len as f64)
        .collect())
}

/// Circular window of half-width `s` around `pos` (0-based).
///
/// Satisfies `(W * x)[r][pos] == <W.filter(r), patch>` for every filter.
pub fn extract_patch(x: &FeatureMap, half_width: usize, pos: usize) -> Result<PatchMatrix> {
    if pos >= x.len {
        return shape_err(format!("patch position {pos} out of range (len {})", x.len));
    }
    let width = 2 * half_width + 1;
    let mut values = Vec::with_capacity(x.channels * width);
    for c in 0..x.channels {
        for off in -(half_width as i64)..=(half_width as i64) {
            values.push(x.get_circ(c, pos as i64 + off));
        }
    }
    Ok(PatchMatrix { channels: x.channels, width, values })
}

/// `||a - b|| / sqrt(||a|| * ||b||)` over two equal-shape flat tensors.
pub fn normalized_l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return shape_err(format!("distance needs equal shapes, got {} vs {}", a.len(), b.len()));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return domain_err("normalized distance undefined for zero-norm operands");
    }
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(diff / (na * nb).sqrt())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Channel-first 2D image `channels x height x width`, circular on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    values: Vec<f64>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image { channels, height, width, values: vec![0.0; channels * height * width] }
    }

    pub fn from_values(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return shape_err(format!(
                "image expects {} values, got {}",
                channels * height * width,
                values.len()
            ));
        }
        Ok(Image { channels, height, width, values })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

/// 2D convolution weights `out_channels x in_channels x (2s+1) x (2s+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dTensor {
    pub out_channels: usize,
    pub in_channels: usize,
    pub half_width: usize,
    weights: Vec<f64>,
}

impl Conv2dTensor {
    pub fn zeros(out_channels: usize, in_channels: usize, half_width: usize) -> Self {
        let k = 2 * half_width + 1;
        Conv2dTensor {
            out_channels,
            in_channels,
            half_width,
            weights: vec![0.0; out_channels * in_channels * k * k],
        }
    }

    pub fn random(
        out_channels: usize,
        in_channels: usize,
        half_width: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let normal = Normal::new(0.0, std).unwrap();
        let k = 2 * half_width + 1;
        let len = out_channels * in_channels * k * k;
        Conv2dTensor {
            out_channels,
            in_channels,
            half_width,
            weights: (0..len).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn kernel_width(&self) -> usize {
        2 * self.half_width + 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, u: usize, v: usize) -> f64 {
        let k = self.kernel_width();
        self.weights[((i * self.in_channels + j) * k + u) * k + v]
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}

/// Circular 2D convolution: `out[i][y][x] = sum_j sum_{u,v} w[i][j][u][v] * in[j][y+u][x+v]`.
pub fn circ_conv2d(w: &Conv2dTensor, img: &Image) -> Result<Image> {
    if w.in_channels != img.channels {
        return shape_err(format!(
            "conv2d expects {} input channels, image has {}",
            w.in_channels, img.channels
        ));
    }
    let (h, wid) = (img.height, img.width);
    let s = w.half_width as i64;
    let k = w.kernel_width();
    let mut out = Image::zeros(w.out_channels, h, wid);
    for i in 0..w.out_channels {
        for j in 0..img.channels {
            for u in 0..k {
                for v in 0..k {
                    let wv = w.get(i, j, u, v);
                    if wv == 0.0 {
                        continue;
                    }
                    let (du, dv) = (u as i64 - s, v as i64 - s);
                    for y in 0..h {
                        let sy = (y as i64 + du).rem_euclid(h as i64) as usize;
                        let src_row = (j * h + sy) * wid;
                        let dst_row = (i * h + y) * wid;
                        for x in 0..wid {
                            let sx = (x as i64 + dv).rem_euclid(wid as i64) as usize;
                            out.values[dst_row + x] += wv * img.values[src_row + sx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
