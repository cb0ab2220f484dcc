//! Autoencoder training stages: reconstruction loss for decoder training
//! against a frozen encoder, and the combined classification+reconstruction
//! loss used inside each pruning round (decoder frozen, gradient flowing to
//! encoder and head only).
//!
//! Batch gradients accumulate in sample order and batches are drawn from a
//! per-epoch stream, so a fixed seed reproduces runs bit-identically.

use crate::error::{domain_err, Result};
use crate::models::autoencoder::{softmax_cross_entropy, GradTargets};
use crate::models::{ConvAutoencoder, HintConfig};
use crate::params::{ParamAccess, ParamSnapshot};
use crate::pruning::PruneMask;
use crate::rng::stream;
use crate::tensor::Image;
use rand::seq::SliceRandom;

/// The combined-loss weights: reconstruction penalty and hint mixing.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda: f64,
    pub hints: HintConfig,
}

impl LossWeights {
    pub fn new(lambda: f64, hints: HintConfig) -> Result<Self> {
        if lambda < 0.0 {
            return domain_err(format!("reconstruction penalty {lambda} must be non-negative"));
        }
        if !(0.0..=1.0).contains(&hints.t) {
            return domain_err(format!("hint proportion {} outside [0,1]", hints.t));
        }
        Ok(LossWeights { lambda, hints })
    }
}

/// Mean squared reconstruction error over the batch.
pub fn recon_loss(model: &ConvAutoencoder, batch: &[&Image], hints: &HintConfig) -> Result<f64> {
    if batch.is_empty() {
        return domain_err("reconstruction loss needs a nonempty batch");
    }
    let mut total = 0.0;
    for img in batch {
        let pass = model.forward(img, hints)?;
        total += pass
            .reconstruction
            .values()
            .iter()
            .zip(img.values())
            .map(|(r, x)| (r - x) * (r - x))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Loss components of one batch under the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub class_loss: f64,
    pub rec_loss: f64,
    /// Smallest rectifier pre-activation magnitude across the batch.
    pub min_abs_preact: f64,
    /// Combined rectifier sign-pattern hash across the batch.
    pub pattern: u64,
}

/// Classification loss plus `lambda` times the reconstruction loss.
pub fn combined_loss(
    model: &ConvAutoencoder,
    batch: &[&Image],
    labels: &[usize],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    if batch.len() != labels.len() {
        return domain_err("labels missing for combined loss");
    }
    if batch.is_empty() {
        return domain_err("combined loss needs a nonempty batch");
    }
    let mut class = 0.0;
    let mut rec = 0.0;
    let mut min_abs = f64::INFINITY;
    let mut pattern = 0xcbf29ce484222325u64;
    for (img, &label) in batch.iter().zip(labels) {
        let pass = model.forward(img, &weights.hints)?;
        min_abs = min_abs.min(pass.min_abs_preact);
        pattern ^= pass.pattern;
        pattern = pattern.wrapping_mul(0x100000001b3);
        let (l, _) = softmax_cross_entropy(&pass.logits, label);
        class += l;
        rec += pass
            .reconstruction
            .values()
            .iter()
            .zip(img.values())
            .map(|(r, x)| (r - x) * (r - x))
            .sum::<f64>();
    }
    let n = batch.len() as f64;
    class /= n;
    rec /= n;
    Ok(LossBreakdown {
        total: class + weights.lambda * rec,
        class_loss: class,
        rec_loss: rec,
        min_abs_preact: min_abs,
        pattern,
    })
}

/// Loss and gradients for one batch under the combined objective. Weight
/// gradients land only in the requested targets; `min_abs_preact` is the
/// smallest rectifier pre-activation magnitude seen across the batch.
pub fn combined_loss_and_grads(
    model: &ConvAutoencoder,
    batch: &[&Image],
    labels: Option<&[usize]>,
    weights: &LossWeights,
    targets: GradTargets,
) -> Result<BatchGrads> {
    if batch.is_empty() {
        return domain_err("gradient step needs a nonempty batch");
    }
    let n = batch.len() as f64;
    let mut grads = ParamSnapshot::new();
    let mut class_loss = 0.0;
    let mut rec_loss = 0.0;
    let mut min_abs_preact = f64::INFINITY;
    let mut pattern = 0xcbf29ce484222325u64;
    let zero_logits = vec![0.0; model.cfg.classes];
    for (i, img) in batch.iter().enumerate() {
        let pass = model.forward(img, &weights.hints)?;
        min_abs_preact = min_abs_preact.min(pass.min_abs_preact);
        pattern ^= pass.pattern;
        pattern = pattern.wrapping_mul(0x100000001b3);
        let dlogits: Vec<f64> = match labels {
            Some(labels) => {
                let (l, mut d) = softmax_cross_entropy(&pass.logits, labels[i]);
                class_loss += l;
                for v in &mut d {
                    *v /= n;
                }
                d
            }
            None => zero_logits.clone(),
        };
        let residual_sq: f64 = pass
            .reconstruction
            .values()
            .iter()
            .zip(img.values())
            .map(|(r, x)| (r - x) * (r - x))
            .sum();
        rec_loss += residual_sq;
        let drecon = if weights.lambda > 0.0 {
            let mut d = pass.reconstruction.clone();
            for (dv, (&rv, &xv)) in d
                .values_mut()
                .iter_mut()
                .zip(pass.reconstruction.values().iter().zip(img.values()))
            {
                *dv = 2.0 * weights.lambda * (rv - xv) / n;
            }
            Some(d)
        } else {
            None
        };
        model.backward(&pass, &dlogits, drecon.as_ref(), &weights.hints, targets, &mut grads)?;
    }
    class_loss /= n;
    rec_loss /= n;
    let total = if labels.is_some() { class_loss + weights.lambda * rec_loss } else {
        weights.lambda * rec_loss
    };
    if !total.is_finite() {
        return domain_err("non-finite loss; training diverged");
    }
    Ok(BatchGrads { total, class_loss, rec_loss, grads, min_abs_preact, pattern })
}

#[derive(Debug)]
pub struct BatchGrads {
    pub total: f64,
    pub class_loss: f64,
    pub rec_loss: f64,
    pub grads: ParamSnapshot,
    pub min_abs_preact: f64,
    pub pattern: u64,
}

/// Plain momentum SGD over named groups. Frozen groups are skipped; when a
/// mask is supplied both the gradients and the stepped weights are masked so
/// pruned entries stay exactly zero.
#[derive(Debug)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: ParamSnapshot,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        SgdMomentum { lr, momentum, velocity: ParamSnapshot::new() }
    }

    pub fn step(
        &mut self,
        model: &mut impl ParamAccess,
        grads: &ParamSnapshot,
        mask: Option<&PruneMask>,
    ) {
        for (name, g) in grads {
            if model.is_frozen(name) {
                continue;
            }
            let g = if let Some(mask) = mask {
                let mut g = g.clone();
                if let Some(bits) = mask.group(name) {
                    for (v, &keep) in g.iter_mut().zip(bits) {
                        if !keep {
                            *v = 0.0;
                        }
                    }
                }
                g
            } else {
                g.clone()
            };
            let vel = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let w = model.group_mut(name);
            for i in 0..g.len() {
                vel[i] = self.momentum * vel[i] + g[i];
                w[i] -= self.lr * vel[i];
            }
        }
        if let Some(mask) = mask {
            mask.apply(model);
        }
    }
}

/// Piecewise-constant learning rate: multiplied by `gamma` at each milestone.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiStepLr {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl MultiStepLr {
    pub fn at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base * self.gamma.powi(drops as i32)
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Epochs at which the learning rate decays by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
}

/// Trains the decoder against a frozen encoder to reduce the reconstruction
/// loss. Returns the per-epoch mean loss curve. The encoder (and head) are
/// bit-identical before and after.
pub fn train_decoder(
    model: &mut ConvAutoencoder,
    images: &[Image],
    cfg: &DecoderTrainConfig,
    hints: &HintConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if images.is_empty() {
        return domain_err("decoder training needs images");
    }
    let was_frozen = (model.encoder_frozen, model.head_frozen, model.decoder_frozen);
    model.encoder_frozen = true;
    model.head_frozen = true;
    model.decoder_frozen = false;
    let targets = GradTargets { encoder: false, head: false, decoder: true };
    let weights = LossWeights { lambda: 1.0, hints: hints.clone() };
    let schedule = MultiStepLr { base: cfg.lr, milestones: cfg.milestones.clone(), gamma: cfg.gamma };
    let mut opt = SgdMomentum::new(cfg.lr, cfg.momentum);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.epochs {
        opt.lr = schedule.at(epoch);
        let mut rng = stream(seed, "decoder-train", epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&Image> = chunk.iter().map(|&i| &images[i]).collect();
            let out = combined_loss_and_grads(model, &batch, None, &weights, targets)?;
            opt.step(model, &out.grads, None);
            epoch_loss += out.rec_loss;
            batches += 1.0;
        }
        curve.push(epoch_loss / batches);
    }
    (model.encoder_frozen, model.head_frozen, model.decoder_frozen) = was_frozen;
    Ok(curve)
}
