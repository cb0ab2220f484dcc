//! The 2D mini autoencoder: four conv/ReLU/downsample encoder stages, a
//! global-average-pool classifier head, and a mirrored decoder driven by
//! nearest-neighbor upsampling, with convex feature-map hint mixing between
//! matching stages.
//!
//! Every backward pass here is hand-derived and checked against central
//! finite differences. Convolutions are circular on both axes and carry no
//! biases; the linear head carries the only bias in the model. The ReLU
//! backward uses derivative zero at exactly zero.

use crate::error::{shape_err, Result};
use crate::params::{ParamAccess, ParamSnapshot};
use crate::tensor::{circ_conv2d, Conv2dTensor, Image};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const STAGES: usize = 4;

/// Architecture of the mini autoencoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    pub input_channels: usize,
    /// Square input side; must be divisible by 16 (four 2x halvings).
    pub input_size: usize,
    pub stage_channels: [usize; STAGES],
    pub classes: usize,
    pub kernel_half_width: usize,
    /// Multiplier on the per-layer He scale `sqrt(2 / fan_in)`.
    pub init_std: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_channels: 1,
            input_size: 32,
            stage_channels: [8, 16, 32, 64],
            classes: 4,
            kernel_half_width: 1,
            init_std: 1.0,
        }
    }
}

/// Which decoder stages receive encoder hints, and the mixing proportion `t`:
/// the stage input becomes `(1-t) * decoder_feature + t * encoder_feature`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintConfig {
    pub t: f64,
    /// Stage indices in 1..=4.
    pub stages: Vec<usize>,
}

impl HintConfig {
    pub fn new(t: f64, stages: Vec<usize>) -> Self {
        HintConfig { t, stages }
    }

    pub fn none() -> Self {
        HintConfig { t: 0.0, stages: Vec::new() }
    }

    fn active(&self, stage: usize) -> bool {
        self.stages.contains(&stage)
    }
}

/// Encoder + head + decoder with per-part freeze flags.
#[derive(Debug, Clone)]
pub struct ConvAutoencoder {
    pub cfg: AutoencoderConfig,
    enc: Vec<Conv2dTensor>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
    dec_entry: Conv2dTensor,
    dec: Vec<Conv2dTensor>,
    pub encoder_frozen: bool,
    pub head_frozen: bool,
    pub decoder_frozen: bool,
}

impl ConvAutoencoder {
    pub fn random(cfg: AutoencoderConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.input_size % 16 != 0 {
            return shape_err("input size must be divisible by 16");
        }
        let s = cfg.kernel_half_width;
        let k = 2 * s + 1;
        let he = |fan_in: usize| cfg.init_std * (2.0 / fan_in as f64).sqrt();
        let mut chain = vec![cfg.input_channels];
        chain.extend_from_slice(&cfg.stage_channels);
        let enc: Vec<Conv2dTensor> = (0..STAGES)
            .map(|i| Conv2dTensor::random(chain[i + 1], chain[i], s, he(chain[i] * k * k), rng))
            .collect();
        let last = cfg.stage_channels[STAGES - 1];
        let head_std = cfg.init_std * (1.0 / last as f64).sqrt();
        let head_normal = Normal::new(0.0, head_std).unwrap();
        let head_w: Vec<f64> = (0..cfg.classes * last).map(|_| head_normal.sample(rng)).collect();
        let head_b = vec![0.0; cfg.classes];
        let dec_entry = Conv2dTensor::random(last, last, s, he(last * k * k), rng);
        // dec[i] implements stage i+1: stage_channels[i] -> chain[i]
        let dec: Vec<Conv2dTensor> = (0..STAGES)
            .map(|i| Conv2dTensor::random(chain[i], chain[i + 1], s, he(chain[i + 1] * k * k), rng))
            .collect();
        Ok(ConvAutoencoder {
            cfg,
            enc,
            head_w,
            head_b,
            dec_entry,
            dec,
            encoder_frozen: false,
            head_frozen: false,
            decoder_frozen: false,
        })
    }

    /// Spatial side of feature `f_i` (stage in 1..=4).
    pub fn stage_size(&self, stage: usize) -> usize {
        self.cfg.input_size >> stage
    }

    /// Total prunable (encoder conv) parameter count.
    pub fn prunable_len(&self) -> usize {
        self.enc.iter().map(|w| w.values().len()).sum()
    }

    /// Encoder stages and head only; the cheap path for classification
    /// training, transfer probes and feature-map extraction.
    pub fn encoder_forward(&self, img: &Image) -> Result<EncoderPass> {
        if img.channels != self.cfg.input_channels
            || img.height != self.cfg.input_size
            || img.width != self.cfg.input_size
        {
            return shape_err(format!(
                "expected {}x{}x{} input, got {}x{}x{}",
                self.cfg.input_channels,
                self.cfg.input_size,
                self.cfg.input_size,
                img.channels,
                img.height,
                img.width
            ));
        }
        let mut rect = RectifierTrace::new();

        // Encoder: conv -> relu -> 2x average downsample per stage.
        let mut enc_pre = Vec::with_capacity(STAGES);
        let mut features = Vec::with_capacity(STAGES);
        let mut h = img.clone();
        for i in 0..STAGES {
            let a = circ_conv2d(&self.enc[i], &h)?;
            rect.observe(&a);
            let r = relu(&a);
            let f = down2(&r);
            enc_pre.push(a);
            h = f.clone();
            features.push(f);
        }

        // Head: global average pool -> linear logits.
        let pool = global_avg_pool(&features[STAGES - 1]);
        let logits = linear_forward(&self.head_w, &self.head_b, &pool, self.cfg.classes);
        Ok(EncoderPass {
            input: img.clone(),
            enc_pre,
            features,
            pool,
            logits,
            min_abs_preact: rect.min_abs,
            pattern: rect.hash,
        })
    }

    pub fn forward(&self, img: &Image, hints: &HintConfig) -> Result<ForwardPass> {
        if !(0.0..=1.0).contains(&hints.t) {
            return shape_err(format!("hint proportion {} outside [0,1]", hints.t));
        }
        let ep = self.encoder_forward(img)?;
        let EncoderPass { input, enc_pre, features, pool, logits, min_abs_preact, pattern } = ep;
        let mut rect = RectifierTrace { hash: pattern, min_abs: min_abs_preact };

        // Decoder: entry conv at code resolution, then per stage
        // (hint mix) -> 2x nearest upsample -> conv (pre-activation).
        let mut g_pre: Vec<Image> = Vec::with_capacity(STAGES);
        let b0 = circ_conv2d(&self.dec_entry, &features[STAGES - 1])?;
        rect.observe(&b0);
        let mut g: Vec<Option<Image>> = vec![None; STAGES];
        g[STAGES - 1] = Some(relu(&b0));
        g_pre.resize(STAGES, Image::zeros(0, 0, 0));
        g_pre[STAGES - 1] = b0;
        let mut mixed_up: Vec<Image> = vec![Image::zeros(0, 0, 0); STAGES];
        let mut recon = Image::zeros(0, 0, 0);
        for stage in (1..=STAGES).rev() {
            let gi = g[stage - 1].take().expect("decoder feature available");
            let v = if hints.active(stage) {
                mix(&gi, &features[stage - 1], hints.t)?
            } else {
                gi
            };
            let u = up2(&v);
            let o = circ_conv2d(&self.dec[stage - 1], &u)?;
            mixed_up[stage - 1] = u;
            if stage > 1 {
                rect.observe(&o);
                g[stage - 2] = Some(relu(&o));
                g_pre[stage - 2] = o;
            } else {
                recon = o; // final reconstruction stays linear
            }
        }

        Ok(ForwardPass {
            input,
            enc_pre,
            features,
            pool,
            logits,
            g_pre,
            mixed_up,
            reconstruction: recon,
            min_abs_preact: rect.min_abs,
            pattern: rect.hash,
        })
    }

    /// Backpropagates `dlogits` and `drecon` through the cached pass,
    /// accumulating weight gradients into `grads` for the selected parts.
    /// Activation gradients always flow through frozen parts.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        dlogits: &[f64],
        drecon: Option<&Image>,
        hints: &HintConfig,
        targets: GradTargets,
        grads: &mut ParamSnapshot,
    ) -> Result<()> {
        let last = STAGES - 1;
        let mut dfeat: Vec<Image> = (0..STAGES)
            .map(|i| {
                Image::zeros(
                    self.cfg.stage_channels[i],
                    self.stage_size(i + 1),
                    self.stage_size(i + 1),
                )
            })
            .collect();

        // Head.
        self.head_backward(&pass.pool, dlogits, targets.head, grads, &mut dfeat[last]);

        // Decoder chain, reconstruction upwards.
        if let Some(drecon) = drecon {
            let mut dout = drecon.clone();
            for stage in 1..=STAGES {
                if targets.decoder {
                    let name = format!("dec{stage}");
                    let g = entry(grads, &name, self.dec[stage - 1].values().len());
                    conv2d_bwd_weights(&pass.mixed_up[stage - 1], &dout, self.dec[stage - 1].half_width, g);
                }
                let du = conv2d_bwd_input(&self.dec[stage - 1], &dout)?;
                let dv = up2_bwd(&du);
                let dg = if hints.active(stage) {
                    axpy_into(&dv, hints.t, &mut dfeat[stage - 1]);
                    scale_image(&dv, 1.0 - hints.t)
                } else {
                    dv
                };
                if stage < STAGES {
                    dout = relu_bwd(&dg, &pass.g_pre[stage - 1]);
                } else {
                    let db0 = relu_bwd(&dg, &pass.g_pre[last]);
                    if targets.decoder {
                        let g = entry(grads, "dec0", self.dec_entry.values().len());
                        conv2d_bwd_weights(&pass.features[last], &db0, self.dec_entry.half_width, g);
                    }
                    let dcode = conv2d_bwd_input(&self.dec_entry, &db0)?;
                    axpy_into(&dcode, 1.0, &mut dfeat[last]);
                }
            }
        }

        // Encoder, deepest stage first.
        if targets.encoder {
            self.encoder_stack_backward(&pass.input, &pass.enc_pre, &pass.features, dfeat, grads)?;
        }
        Ok(())
    }

    /// Backward for the encoder-only path: head gradients plus an optional
    /// extra gradient on the last feature map (e.g. from a pixel head).
    pub fn encoder_backward(
        &self,
        pass: &EncoderPass,
        dlogits: &[f64],
        dfeat_last: Option<&Image>,
        targets: GradTargets,
        grads: &mut ParamSnapshot,
    ) -> Result<()> {
        let last = STAGES - 1;
        let mut dfeat: Vec<Image> = (0..STAGES)
            .map(|i| {
                Image::zeros(
                    self.cfg.stage_channels[i],
                    self.stage_size(i + 1),
                    self.stage_size(i + 1),
                )
            })
            .collect();
        self.head_backward(&pass.pool, dlogits, targets.head, grads, &mut dfeat[last]);
        if let Some(extra) = dfeat_last {
            axpy_into(extra, 1.0, &mut dfeat[last]);
        }
        if targets.encoder {
            self.encoder_stack_backward(&pass.input, &pass.enc_pre, &pass.features, dfeat, grads)?;
        }
        Ok(())
    }

    fn head_backward(
        &self,
        pool: &[f64],
        dlogits: &[f64],
        want_grads: bool,
        grads: &mut ParamSnapshot,
        dfeat_last: &mut Image,
    ) {
        if dlogits.iter().all(|&v| v == 0.0) {
            return;
        }
        let ch = self.cfg.stage_channels[STAGES - 1];
        if want_grads {
            let gw = entry(grads, "head_w", self.head_w.len());
            for k in 0..self.cfg.classes {
                for c in 0..ch {
                    gw[k * ch + c] += dlogits[k] * pool[c];
                }
            }
            let gb = entry(grads, "head_b", self.head_b.len());
            for k in 0..self.cfg.classes {
                gb[k] += dlogits[k];
            }
        }
        let mut dpool = vec![0.0; ch];
        for (c, dp) in dpool.iter_mut().enumerate() {
            for k in 0..self.cfg.classes {
                *dp += self.head_w[k * ch + c] * dlogits[k];
            }
        }
        global_avg_pool_bwd(&dpool, dfeat_last);
    }

    fn encoder_stack_backward(
        &self,
        input: &Image,
        enc_pre: &[Image],
        features: &[Image],
        mut dfeat: Vec<Image>,
        grads: &mut ParamSnapshot,
    ) -> Result<()> {
        for i in (0..STAGES).rev() {
            let dr = down2_bwd(&dfeat[i]);
            let da = relu_bwd(&dr, &enc_pre[i]);
            let name = format!("enc{}", i + 1);
            let below: &Image = if i == 0 { input } else { &features[i - 1] };
            let g = entry(grads, &name, self.enc[i].values().len());
            conv2d_bwd_weights(below, &da, self.enc[i].half_width, g);
            if i > 0 {
                let dh = conv2d_bwd_input(&self.enc[i], &da)?;
                axpy_into(&dh, 1.0, &mut dfeat[i - 1]);
            }
        }
        Ok(())
    }
}

/// Cached encoder-only evaluation.
#[derive(Debug, Clone)]
pub struct EncoderPass {
    pub input: Image,
    pub enc_pre: Vec<Image>,
    pub features: Vec<Image>,
    pub pool: Vec<f64>,
    pub logits: Vec<f64>,
    pub min_abs_preact: f64,
    pub pattern: u64,
}

/// Which parts receive weight gradients during a backward pass.
#[derive(Debug, Clone, Copy)]
pub struct GradTargets {
    pub encoder: bool,
    pub head: bool,
    pub decoder: bool,
}

impl GradTargets {
    pub fn unfrozen(model: &ConvAutoencoder) -> Self {
        GradTargets {
            encoder: !model.encoder_frozen,
            head: !model.head_frozen,
            decoder: !model.decoder_frozen,
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub input: Image,
    pub enc_pre: Vec<Image>,
    /// Encoder stage outputs f_1..f_4.
    pub features: Vec<Image>,
    pub pool: Vec<f64>,
    pub logits: Vec<f64>,
    /// Pre-activations of decoder features g_1..g_4.
    pub g_pre: Vec<Image>,
    /// Upsampled (post-hint-mix) decoder stage inputs.
    pub mixed_up: Vec<Image>,
    pub reconstruction: Image,
    /// Smallest |pre-activation| seen at any rectifier.
    pub min_abs_preact: f64,
    /// FNV hash of every rectifier's sign bit in evaluation order; two
    /// evaluations on the same piecewise-linear region share this value.
    pub pattern: u64,
}

impl ParamAccess for ConvAutoencoder {
    fn group_names(&self) -> Vec<String> {
        let mut names = vec![
            "dec0".to_string(),
            "dec1".to_string(),
            "dec2".to_string(),
            "dec3".to_string(),
            "dec4".to_string(),
            "enc1".to_string(),
            "enc2".to_string(),
            "enc3".to_string(),
            "enc4".to_string(),
            "head_b".to_string(),
            "head_w".to_string(),
        ];
        names.sort();
        names
    }

    fn group(&self, name: &str) -> &[f64] {
        match name {
            "dec0" => self.dec_entry.values(),
            "dec1" => self.dec[0].values(),
            "dec2" => self.dec[1].values(),
            "dec3" => self.dec[2].values(),
            "dec4" => self.dec[3].values(),
            "enc1" => self.enc[0].values(),
            "enc2" => self.enc[1].values(),
            "enc3" => self.enc[2].values(),
            "enc4" => self.enc[3].values(),
            "head_w" => &self.head_w,
            "head_b" => &self.head_b,
            other => panic!("unknown parameter group {other}"),
        }
    }

    fn group_mut(&mut self, name: &str) -> &mut [f64] {
        match name {
            "dec0" => self.dec_entry.values_mut(),
            "dec1" => self.dec[0].values_mut(),
            "dec2" => self.dec[1].values_mut(),
            "dec3" => self.dec[2].values_mut(),
            "dec4" => self.dec[3].values_mut(),
            "enc1" => self.enc[0].values_mut(),
            "enc2" => self.enc[1].values_mut(),
            "enc3" => self.enc[2].values_mut(),
            "enc4" => self.enc[3].values_mut(),
            "head_w" => &mut self.head_w,
            "head_b" => &mut self.head_b,
            other => panic!("unknown parameter group {other}"),
        }
    }

    fn is_frozen(&self, name: &str) -> bool {
        if name.starts_with("enc") {
            self.encoder_frozen
        } else if name.starts_with("dec") {
            self.decoder_frozen
        } else {
            self.head_frozen
        }
    }

    fn is_prunable(&self, name: &str) -> bool {
        name.starts_with("enc")
    }
}

fn entry<'a>(grads: &'a mut ParamSnapshot, name: &str, len: usize) -> &'a mut Vec<f64> {
    grads.entry(name.to_string()).or_insert_with(|| vec![0.0; len])
}

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

fn relu(x: &Image) -> Image {
    let mut out = x.clone();
    for v in out.values_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Derivative taken as zero at exactly zero.
fn relu_bwd(dout: &Image, pre: &Image) -> Image {
    let mut out = dout.clone();
    for (v, &p) in out.values_mut().iter_mut().zip(pre.values()) {
        if p <= 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Folds rectifier pre-activations into a sign-pattern hash and min |value|.
struct RectifierTrace {
    hash: u64,
    min_abs: f64,
}

impl RectifierTrace {
    fn new() -> Self {
        RectifierTrace { hash: 0xcbf29ce484222325, min_abs: f64::INFINITY }
    }

    fn observe(&mut self, pre: &Image) {
        for &v in pre.values() {
            self.hash ^= (v > 0.0) as u64 + 1;
            self.hash = self.hash.wrapping_mul(0x100000001b3);
            let a = v.abs();
            if a < self.min_abs {
                self.min_abs = a;
            }
        }
    }
}

/// 2x2 average downsample; sides must be even.
fn down2(x: &Image) -> Image {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut out = Image::zeros(x.channels, h, w);
    for c in 0..x.channels {
        for y in 0..h {
            for xx in 0..w {
                let s = x.get(c, 2 * y, 2 * xx)
                    + x.get(c, 2 * y, 2 * xx + 1)
                    + x.get(c, 2 * y + 1, 2 * xx)
                    + x.get(c, 2 * y + 1, 2 * xx + 1);
                out.set(c, y, xx, 0.25 * s);
            }
        }
    }
    out
}

fn down2_bwd(dout: &Image) -> Image {
    let (h, w) = (dout.height * 2, dout.width * 2);
    let mut out = Image::zeros(dout.channels, h, w);
    for c in 0..dout.channels {
        for y in 0..dout.height {
            for xx in 0..dout.width {
                let g = 0.25 * dout.get(c, y, xx);
                out.set(c, 2 * y, 2 * xx, g);
                out.set(c, 2 * y, 2 * xx + 1, g);
                out.set(c, 2 * y + 1, 2 * xx, g);
                out.set(c, 2 * y + 1, 2 * xx + 1, g);
            }
        }
    }
    out
}

/// 2x nearest-neighbor upsample.
fn up2(x: &Image) -> Image {
    let (h, w) = (x.height * 2, x.width * 2);
    let mut out = Image::zeros(x.channels, h, w);
    for c in 0..x.channels {
        for y in 0..h {
            for xx in 0..w {
                out.set(c, y, xx, x.get(c, y / 2, xx / 2));
            }
        }
    }
    out
}

fn up2_bwd(dout: &Image) -> Image {
    let (h, w) = (dout.height / 2, dout.width / 2);
    let mut out = Image::zeros(dout.channels, h, w);
    for c in 0..dout.channels {
        for y in 0..dout.height {
            for xx in 0..dout.width {
                let v = out.get(c, y / 2, xx / 2) + dout.get(c, y, xx);
                out.set(c, y / 2, xx / 2, v);
            }
        }
    }
    out
}

fn global_avg_pool(x: &Image) -> Vec<f64> {
    let area = (x.height * x.width) as f64;
    (0..x.channels)
        .map(|c| {
            let base = c * x.height * x.width;
            x.values()[base..base + x.height * x.width].iter().sum::<f64>() / area
        })
        .collect()
}

fn global_avg_pool_bwd(dpool: &[f64], dimg: &mut Image) {
    let area = (dimg.height * dimg.width) as f64;
    for (c, &d) in dpool.iter().enumerate() {
        let g = d / area;
        let hw = dimg.height * dimg.width;
        for v in &mut dimg.values_mut()[c * hw..(c + 1) * hw] {
            *v += g;
        }
    }
}

fn linear_forward(w: &[f64], b: &[f64], input: &[f64], classes: usize) -> Vec<f64> {
    let ch = input.len();
    (0..classes)
        .map(|k| b[k] + w[k * ch..(k + 1) * ch].iter().zip(input).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

fn mix(g: &Image, f: &Image, t: f64) -> Result<Image> {
    if g.channels != f.channels || g.height != f.height || g.width != f.width {
        return shape_err("hint mix needs matching shapes");
    }
    let mut out = g.clone();
    for (o, &fv) in out.values_mut().iter_mut().zip(f.values()) {
        *o = (1.0 - t) * *o + t * fv;
    }
    Ok(out)
}

fn scale_image(x: &Image, a: f64) -> Image {
    let mut out = x.clone();
    for v in out.values_mut() {
        *v *= a;
    }
    out
}

fn axpy_into(src: &Image, a: f64, dst: &mut Image) {
    for (d, &s) in dst.values_mut().iter_mut().zip(src.values()) {
        *d += a * s;
    }
}

/// dL/dW for a circular conv: correlate the layer input with `dout`.
fn conv2d_bwd_weights(input: &Image, dout: &Image, half_width: usize, gw: &mut [f64]) {
    let k = 2 * half_width + 1;
    let (h, w) = (input.height, input.width);
    let s = half_width as i64;
    for i in 0..dout.channels {
        for j in 0..input.channels {
            for u in 0..k {
                for v in 0..k {
                    let (du, dv) = (u as i64 - s, v as i64 - s);
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = (y as i64 + du).rem_euclid(h as i64) as usize;
                        for x in 0..w {
                            let sx = (x as i64 + dv).rem_euclid(w as i64) as usize;
                            acc += dout.get(i, y, x) * input.get(j, sy, sx);
                        }
                    }
                    gw[((i * input.channels + j) * k + u) * k + v] += acc;
                }
            }
        }
    }
}

/// dL/dinput for a circular conv: full correlation with the flipped kernel.
fn conv2d_bwd_input(wt: &Conv2dTensor, dout: &Image) -> Result<Image> {
    let (h, w) = (dout.height, dout.width);
    let s = wt.half_width as i64;
    let k = wt.kernel_width();
    let mut out = Image::zeros(wt.in_channels, h, w);
    for i in 0..wt.out_channels {
        for j in 0..wt.in_channels {
            for u in 0..k {
                for v in 0..k {
                    let wv = wt.get(i, j, u, v);
                    if wv == 0.0 {
                        continue;
                    }
                    let (du, dv) = (u as i64 - s, v as i64 - s);
                    for y in 0..h {
                        let ty = (y as i64 + du).rem_euclid(h as i64) as usize;
                        for x in 0..w {
                            let tx = (x as i64 + dv).rem_euclid(w as i64) as usize;
                            let val = out.get(j, ty, tx) + wv * dout.get(i, y, x);
                            out.set(j, ty, tx, val);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Numerically stable softmax cross-entropy; returns loss and dlogits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut dlogits: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    dlogits[label] -= 1.0;
    (loss, dlogits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_cfg() -> AutoencoderConfig {
        AutoencoderConfig {
            input_channels: 1,
            input_size: 16,
            stage_channels: [2, 3, 4, 5],
            classes: 3,
            kernel_half_width: 1,
            init_std: 0.4,
        }
    }

    fn random_image(cfg: &AutoencoderConfig, rng: &mut impl Rng) -> Image {
        let mut img = Image::zeros(cfg.input_channels, cfg.input_size, cfg.input_size);
        for v in img.values_mut() {
            *v = rng.gen::<f64>();
        }
        img
    }

    #[test]
    fn reconstruction_has_input_shape() {
        for size in [16, 32] {
            let mut cfg = small_cfg();
            cfg.input_size = size;
            let mut rng = stream(4, "ae-test", 0);
            let model = ConvAutoencoder::random(cfg.clone(), &mut rng).unwrap();
            let img = random_image(&cfg, &mut rng);
            let pass = model.forward(&img, &HintConfig::none()).unwrap();
            assert_eq!(pass.reconstruction.channels, cfg.input_channels);
            assert_eq!(pass.reconstruction.height, size);
            assert_eq!(pass.reconstruction.width, size);
        }
    }

    #[test]
    fn without_hints_reconstruction_depends_only_on_code() {
        // With t = 0 the hint paths are inert: recomputing the decoder from
        // the same code after zeroing f3's hint contribution changes nothing.
        let mut rng = stream(4, "ae-test", 1);
        let cfg = small_cfg();
        let model = ConvAutoencoder::random(cfg.clone(), &mut rng).unwrap();
        let img = random_image(&cfg, &mut rng);
        let plain = model.forward(&img, &HintConfig::none()).unwrap();
        let hinted_zero = model.forward(&img, &HintConfig::new(0.0, vec![3])).unwrap();
        for (a, b) in plain
            .reconstruction
            .values()
            .iter()
            .zip(hinted_zero.reconstruction.values())
        {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn full_hint_replaces_decoder_feature() {
        // With t = 1 the mixed stage input equals the encoder feature, so the
        // decoder path below that stage no longer influences the mix.
        let mut rng = stream(4, "ae-test", 2);
        let cfg = small_cfg();
        let model = ConvAutoencoder::random(cfg.clone(), &mut rng).unwrap();
        let img = random_image(&cfg, &mut rng);
        let pass = model.forward(&img, &HintConfig::new(1.0, vec![1, 2, 3, 4])).unwrap();
        // mixed_up[0] is up2 of the stage-1 input; with t=1 that input is f1.
        let expect = up2(&pass.features[0]);
        for (a, b) in pass.mixed_up[0].values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hint_mix_is_exact_convex_combination() {
        let mut g = Image::zeros(1, 2, 2);
        let mut f = Image::zeros(1, 2, 2);
        for v in g.values_mut() {
            *v = 0.0;
        }
        for v in f.values_mut() {
            *v = 1.0;
        }
        let m = mix(&g, &f, 0.1).unwrap();
        for &v in m.values() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_round_trips() {
        let mut rng = stream(4, "ae-test", 3);
        let mut x = Image::zeros(2, 4, 4);
        for v in x.values_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        // up2 then down2 is the identity for nearest + mean.
        let back = down2(&up2(&x));
        for (a, b) in x.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn group_names_are_sorted_and_complete() {
        let mut rng = stream(4, "ae-test", 4);
        let model = ConvAutoencoder::random(small_cfg(), &mut rng).unwrap();
        let names = model.group_names();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names.len(), 11);
        assert!(names.iter().filter(|n| model.is_prunable(n)).count() == 4);
    }

    #[test]
    fn softmax_ce_gradient_sums_to_zero() {
        let (loss, d) = softmax_cross_entropy(&[0.2, -1.0, 3.0], 1);
        assert!(loss > 0.0);
        assert!(d.iter().sum::<f64>().abs() < 1e-12);
        assert!(d[1] < 0.0);
    }
}
