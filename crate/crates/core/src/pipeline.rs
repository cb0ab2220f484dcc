//! The end-to-end ticket study: pretrain a classifier encoder, train a
//! decoder against it, run iterative magnitude pruning with the combined
//! loss (decoder frozen), and probe every recorded ticket on downstream
//! image-level and pixel-level tasks plus its feature-map distance to the
//! dense model.

use crate::autoenc::{
    combined_loss_and_grads, train_decoder, DecoderTrainConfig, LossWeights, SgdMomentum,
};
use crate::data::{gen_shape_images, CsvTable, ImageDataset, ShapeDatasetConfig, ShapeKind, ToyTask};
use crate::error::{domain_err, Result};
use crate::models::autoencoder::{softmax_cross_entropy, GradTargets};
use crate::models::{AutoencoderConfig, ConvAutoencoder};
use crate::params::{ParamAccess, ParamSnapshot};
use crate::pruning::{iterative_prune, IterativePruneConfig, PruneMask, Ticket};
use crate::rng::{derive, stream};
use crate::tensor::{normalized_l2_distance, Image};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Method {
    /// Rewind surviving weights to the pretrained values after every round.
    ModifiedLth,
    /// Carry weights forward between rounds.
    Imp,
}

/// Epochs/optimizer settings shared by the training stages.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineDatasetConfig {
    pub train_count: usize,
    pub test_count: usize,
    pub size: usize,
    pub noise_std: f64,
    pub upstream_classes: Vec<ShapeKind>,
    pub downstream_classes: Vec<ShapeKind>,
}

impl Default for PipelineDatasetConfig {
    fn default() -> Self {
        PipelineDatasetConfig {
            train_count: 2000,
            test_count: 500,
            size: 32,
            noise_std: 0.05,
            upstream_classes: vec![ShapeKind::Disk, ShapeKind::Square],
            downstream_classes: vec![ShapeKind::Cross, ShapeKind::Ring],
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub stage: StageConfig,
    /// Rounds whose tickets get transfer probes; `None` probes every round.
    pub rounds: Option<Vec<usize>>,
    /// Freeze the encoder during transfer (mask stays fixed either way).
    pub freeze_encoder: bool,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub model: AutoencoderConfig,
    pub dataset: PipelineDatasetConfig,
    pub pretrain: StageConfig,
    pub decoder: DecoderTrainConfig,
    pub loss: LossWeights,
    pub rounds: usize,
    pub prune_rate: f64,
    pub round_finetune: StageConfig,
    pub transfer: TransferConfig,
    pub method: Method,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model.classes != self.dataset.upstream_classes.len() {
            return domain_err(format!(
                "model has {} classes but the upstream split has {}",
                self.model.classes,
                self.dataset.upstream_classes.len()
            ));
        }
        if self.model.input_size != self.dataset.size {
            return domain_err("model input size does not match the dataset image size");
        }
        if self.rounds == 0 || !(0.0..1.0).contains(&self.prune_rate) {
            return domain_err("need rounds >= 1 and prune rate in (0, 1)");
        }
        Ok(())
    }
}

/// Per-ticket record of the study.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TicketRow {
    pub round: usize,
    pub sparsity: f64,
    /// Final combined loss of the round's finetune.
    pub upstream_loss: f64,
    /// Upstream test accuracy of the recorded ticket state.
    pub upstream_class_acc: f64,
    /// Mean normalized l2 distance between the ticket's last feature map and
    /// the dense pretrained model's, over the upstream test set.
    pub featmap_dist_ticket: f64,
    /// Same distance measured at the end of the round's finetune (before any
    /// rewind).
    pub featmap_dist_finetuned: f64,
    pub down_class_acc: Option<f64>,
    pub down_pixel_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rows: Vec<TicketRow>,
    pub tickets: Vec<Ticket>,
    pub theta_pre: ParamSnapshot,
    pub pretrain_test_acc: f64,
    pub decoder_loss_curve: Vec<f64>,
    pub seed: u64,
}

impl PipelineOutput {
    /// Fixed-schema per-ticket CSV.
    pub fn csv(&self) -> CsvTable {
        use crate::data::fmt_f64 as f;
        let mut t = CsvTable::new(&[
            "round",
            "sparsity",
            "upstream_loss",
            "upstream_class_acc",
            "featmap_dist_ticket",
            "featmap_dist_finetuned",
            "down_class_acc",
            "down_pixel_acc",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.round.to_string(),
                f(r.sparsity),
                f(r.upstream_loss),
                f(r.upstream_class_acc),
                f(r.featmap_dist_ticket),
                f(r.featmap_dist_finetuned),
                r.down_class_acc.map(f).unwrap_or_default(),
                r.down_pixel_acc.map(f).unwrap_or_default(),
            ]);
        }
        t
    }
}

pub fn run_pipeline(cfg: &PipelineConfig, seed: u64) -> Result<PipelineOutput> {
    cfg.validate()?;
    let shape_cfg = |classes: &[ShapeKind], count: usize| ShapeDatasetConfig {
        count,
        size: cfg.dataset.size,
        classes: classes.to_vec(),
        noise_std: cfg.dataset.noise_std,
    };
    let up_train = gen_shape_images(
        &shape_cfg(&cfg.dataset.upstream_classes, cfg.dataset.train_count),
        derive(seed, 0xA1),
        ToyTask::Class,
    )?;
    let up_test = gen_shape_images(
        &shape_cfg(&cfg.dataset.upstream_classes, cfg.dataset.test_count),
        derive(seed, 0xA2),
        ToyTask::Class,
    )?;
    let down_train = gen_shape_images(
        &shape_cfg(&cfg.dataset.downstream_classes, cfg.dataset.train_count),
        derive(seed, 0xA3),
        ToyTask::Pixel,
    )?;
    let down_test = gen_shape_images(
        &shape_cfg(&cfg.dataset.downstream_classes, cfg.dataset.test_count),
        derive(seed, 0xA4),
        ToyTask::Pixel,
    )?;

    // Stage 0: pretrain the encoder + head on the upstream classification task.
    let mut model =
        ConvAutoencoder::random(cfg.model.clone(), &mut stream(seed, "pipeline-init", 0))?;
    train_classifier(
        &mut model,
        &up_train.images,
        &up_train.class_labels,
        &cfg.pretrain,
        None,
        GradTargets { encoder: true, head: true, decoder: false },
        seed,
        "pretrain",
    )?;
    let pretrain_test_acc = classification_accuracy(&model, &up_test.images, &up_test.class_labels)?;
    let theta_pre = model.snapshot();
    let dense_model = model.clone();

    // Stage 1: decoder against the frozen encoder.
    let decoder_loss_curve = train_decoder(
        &mut model,
        &up_train.images,
        &cfg.decoder,
        &cfg.loss.hints,
        derive(seed, 0xB1),
    )?;

    // Stage 2: iterative pruning with the combined loss, decoder frozen.
    model.decoder_frozen = true;
    let theta_pre_with_decoder = model.snapshot();
    let prune_cfg = IterativePruneConfig {
        rounds: cfg.rounds,
        prune_rate: cfg.prune_rate,
        rewind: cfg.method == Method::ModifiedLth,
    };
    let finetune_seed = derive(seed, 0xC1);
    let mut finetuned_distances: Vec<f64> = Vec::new();
    let mut rows: Vec<TicketRow> = Vec::new();
    let transfer_rounds = cfg.transfer.rounds.clone();
    let outcomes = {
        let dense_ref = &dense_model;
        let up_test_ref = &up_test;
        let down_train_ref = &down_train;
        let down_test_ref = &down_test;
        let finetuned_distances = &mut finetuned_distances;
        let rows = &mut rows;
        iterative_prune(
            &mut model,
            &theta_pre_with_decoder,
            &prune_cfg,
            "theta_pre",
            |m, mask, round| {
                let loss = finetune_combined(
                    m,
                    &up_train.images,
                    &up_train.class_labels,
                    &cfg.loss,
                    mask,
                    &cfg.round_finetune,
                    finetune_seed,
                    round,
                )?;
                finetuned_distances
                    .push(feature_distance(m, dense_ref, &up_test_ref.images)?);
                Ok(loss)
            },
            |m, ticket| {
                let dist_ticket = feature_distance(m, dense_ref, &up_test_ref.images)?;
                let acc =
                    classification_accuracy(m, &up_test_ref.images, &up_test_ref.class_labels)?;
                let probe = transfer_rounds
                    .as_ref()
                    .map_or(true, |rounds| rounds.contains(&ticket.round));
                let (down_class, down_pixel) = if probe {
                    let class_acc = transfer_classification(
                        m,
                        &ticket.mask,
                        down_train_ref,
                        down_test_ref,
                        cfg,
                        derive(seed, 0xD0 + ticket.round as u64),
                    )?;
                    let pixel_acc = transfer_pixel(
                        m,
                        &ticket.mask,
                        down_train_ref,
                        down_test_ref,
                        cfg,
                        derive(seed, 0xE0 + ticket.round as u64),
                    )?;
                    (Some(class_acc), Some(pixel_acc))
                } else {
                    (None, None)
                };
                rows.push(TicketRow {
                    round: ticket.round,
                    sparsity: ticket.sparsity,
                    upstream_loss: 0.0, // filled from outcomes below
                    upstream_class_acc: acc,
                    featmap_dist_ticket: dist_ticket,
                    featmap_dist_finetuned: 0.0,
                    down_class_acc: down_class,
                    down_pixel_acc: down_pixel,
                });
                Ok(())
            },
        )?
    };
    for (i, row) in rows.iter_mut().enumerate() {
        row.upstream_loss = outcomes[i].finetune_loss;
        row.featmap_dist_finetuned = finetuned_distances[i];
    }
    let tickets = outcomes.into_iter().map(|o| o.ticket).collect();

    Ok(PipelineOutput {
        rows,
        tickets,
        theta_pre,
        pretrain_test_acc,
        decoder_loss_curve,
        seed,
    })
}

/// Cross-entropy training of encoder + head (decoder untouched). The mask,
/// when given, pins pruned weights at zero through every step.
#[allow(clippy::too_many_arguments)]
fn train_classifier(
    model: &mut ConvAutoencoder,
    images: &[Image],
    labels: &[usize],
    stage: &StageConfig,
    mask: Option<&PruneMask>,
    targets: GradTargets,
    seed: u64,
    label: &str,
) -> Result<f64> {
    let mut opt = SgdMomentum::new(stage.lr, stage.momentum);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut last_loss = f64::NAN;
    for epoch in 0..stage.epochs {
        let mut rng = stream(seed, label, epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(stage.batch_size.max(1)) {
            let mut grads = ParamSnapshot::new();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let pass = model.encoder_forward(&images[i])?;
                let (l, mut dlogits) = softmax_cross_entropy(&pass.logits, labels[i]);
                batch_loss += l;
                for d in &mut dlogits {
                    *d /= chunk.len() as f64;
                }
                model.encoder_backward(&pass, &dlogits, None, targets, &mut grads)?;
            }
            batch_loss /= chunk.len() as f64;
            if !batch_loss.is_finite() {
                return domain_err("classification training diverged");
            }
            opt.step(model, &grads, mask);
            epoch_loss += batch_loss;
            batches += 1.0;
        }
        last_loss = epoch_loss / batches;
    }
    Ok(last_loss)
}

/// One round of combined-loss finetuning (classification + lambda *
/// reconstruction) with the decoder frozen and the mask pinned.
#[allow(clippy::too_many_arguments)]
fn finetune_combined(
    model: &mut ConvAutoencoder,
    images: &[Image],
    labels: &[usize],
    weights: &LossWeights,
    mask: &PruneMask,
    stage: &StageConfig,
    seed: u64,
    round: usize,
) -> Result<f64> {
    let targets = GradTargets { encoder: true, head: true, decoder: false };
    let mut opt = SgdMomentum::new(stage.lr, stage.momentum);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut last_loss = f64::NAN;
    for epoch in 0..stage.epochs {
        let mut rng = stream(seed, "round-finetune", (round * 10_000 + epoch) as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(stage.batch_size.max(1)) {
            let batch: Vec<&Image> = chunk.iter().map(|&i| &images[i]).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let out =
                combined_loss_and_grads(model, &batch, Some(&batch_labels), weights, targets)?;
            opt.step(model, &out.grads, Some(mask));
            epoch_loss += out.total;
            batches += 1.0;
        }
        last_loss = epoch_loss / batches;
    }
    Ok(last_loss)
}

fn classification_accuracy(
    model: &ConvAutoencoder,
    images: &[Image],
    labels: &[usize],
) -> Result<f64> {
    let mut correct = 0usize;
    for (img, &label) in images.iter().zip(labels) {
        let pass = model.encoder_forward(img)?;
        let pred = argmax(&pass.logits);
        correct += (pred == label) as usize;
    }
    Ok(correct as f64 / images.len() as f64)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Normalized l2 distance between the two models' last feature maps stacked
/// over the whole image set. A pruned model whose features die to exactly
/// zero sits at the divergent limit of the normalized distance; that limit is
/// reported as infinity rather than an error.
fn feature_distance(
    model: &ConvAutoencoder,
    dense: &ConvAutoencoder,
    images: &[Image],
) -> Result<f64> {
    let mut a_stack = Vec::new();
    let mut b_stack = Vec::new();
    for img in images {
        let a = model.encoder_forward(img)?;
        let b = dense.encoder_forward(img)?;
        a_stack.extend_from_slice(a.features.last().unwrap().values());
        b_stack.extend_from_slice(b.features.last().unwrap().values());
    }
    let zero_a = a_stack.iter().all(|&v| v == 0.0);
    let zero_b = b_stack.iter().all(|&v| v == 0.0);
    match (zero_a, zero_b) {
        (true, true) => Ok(0.0),
        (true, false) | (false, true) => Ok(f64::INFINITY),
        (false, false) => normalized_l2_distance(&a_stack, &b_stack),
    }
}

/// Builds a transfer copy: ticket encoder weights, fresh random head sized
/// for the downstream classes.
fn transfer_model(
    ticket_model: &ConvAutoencoder,
    classes: usize,
    rng_seed: u64,
) -> Result<ConvAutoencoder> {
    let mut cfg = ticket_model.cfg.clone();
    cfg.classes = classes;
    let mut fresh =
        ConvAutoencoder::random(cfg, &mut stream(rng_seed, "transfer-model", 0))?;
    for name in ["enc1", "enc2", "enc3", "enc4"] {
        fresh.group_mut(name).copy_from_slice(ticket_model.group(name));
    }
    Ok(fresh)
}

fn transfer_classification(
    ticket_model: &ConvAutoencoder,
    mask: &PruneMask,
    train: &ImageDataset,
    test: &ImageDataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<f64> {
    let mut model = transfer_model(ticket_model, cfg.dataset.downstream_classes.len(), seed)?;
    let targets = GradTargets {
        encoder: !cfg.transfer.freeze_encoder,
        head: true,
        decoder: false,
    };
    train_classifier(
        &mut model,
        &train.images,
        &train.class_labels,
        &cfg.transfer.stage,
        Some(mask),
        targets,
        seed,
        "transfer-class",
    )?;
    classification_accuracy(&model, &test.images, &test.class_labels)
}

/// 1x1 conv head on the last feature map; its logits are nearest-upsampled to
/// the image resolution for the per-pixel loss and accuracy.
struct PixelHead {
    classes: usize,
    channels: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    vel_w: Vec<f64>,
    vel_b: Vec<f64>,
}

impl PixelHead {
    fn random(classes: usize, channels: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / channels as f64).sqrt();
        PixelHead {
            classes,
            channels,
            w: (0..classes * channels).map(|_| (rng.gen::<f64>() - 0.5) * 2.0 * std).collect(),
            b: vec![0.0; classes],
            vel_w: vec![0.0; classes * channels],
            vel_b: vec![0.0; classes],
        }
    }

    /// Per-cell logits over the feature map.
    fn logits(&self, feat: &Image) -> Vec<f64> {
        let cells = feat.height * feat.width;
        let mut out = vec![0.0; self.classes * cells];
        for cell in 0..cells {
            let (y, x) = (cell / feat.width, cell % feat.width);
            for k in 0..self.classes {
                let mut acc = self.b[k];
                for c in 0..self.channels {
                    acc += self.w[k * self.channels + c] * feat.get(c, y, x);
                }
                out[k * cells + cell] = acc;
            }
        }
        out
    }

    /// Mean per-pixel cross-entropy of the upsampled logits against the label
    /// map, plus gradients with respect to the head and the feature map.
    fn loss_and_grads(
        &self,
        feat: &Image,
        labels: &[u8],
        image_size: usize,
    ) -> (f64, Vec<f64>, Vec<f64>, Image) {
        let cells = feat.height * feat.width;
        let scale = image_size / feat.height;
        let logits = self.logits(feat);
        let mut loss = 0.0;
        let mut gw = vec![0.0; self.w.len()];
        let mut gb = vec![0.0; self.b.len()];
        let mut gfeat = Image::zeros(feat.channels, feat.height, feat.width);
        let npix = (image_size * image_size) as f64;
        let mut cell_logits = vec![0.0; self.classes];
        for py in 0..image_size {
            for px in 0..image_size {
                let (cy, cx) = (py / scale, px / scale);
                let cell = cy * feat.width + cx;
                for k in 0..self.classes {
                    cell_logits[k] = logits[k * cells + cell];
                }
                let label = labels[py * image_size + px] as usize;
                let (l, dlogits) = softmax_cross_entropy(&cell_logits, label);
                loss += l / npix;
                for k in 0..self.classes {
                    let d = dlogits[k] / npix;
                    gb[k] += d;
                    for c in 0..self.channels {
                        gw[k * self.channels + c] += d * feat.get(c, cy, cx);
                        let cur = gfeat.get(c, cy, cx) + d * self.w[k * self.channels + c];
                        gfeat.set(c, cy, cx, cur);
                    }
                }
            }
        }
        (loss, gw, gb, gfeat)
    }

    fn step(&mut self, gw: &[f64], gb: &[f64], lr: f64, momentum: f64) {
        for i in 0..self.w.len() {
            self.vel_w[i] = momentum * self.vel_w[i] + gw[i];
            self.w[i] -= lr * self.vel_w[i];
        }
        for i in 0..self.b.len() {
            self.vel_b[i] = momentum * self.vel_b[i] + gb[i];
            self.b[i] -= lr * self.vel_b[i];
        }
    }

    fn accuracy(&self, feat: &Image, labels: &[u8], image_size: usize) -> f64 {
        let cells = feat.height * feat.width;
        let scale = image_size / feat.height;
        let logits = self.logits(feat);
        let mut correct = 0usize;
        for py in 0..image_size {
            for px in 0..image_size {
                let cell = (py / scale) * feat.width + px / scale;
                let mut best = 0;
                for k in 1..self.classes {
                    if logits[k * cells + cell] > logits[best * cells + cell] {
                        best = k;
                    }
                }
                correct += (best == labels[py * image_size + px] as usize) as usize;
            }
        }
        correct as f64 / (image_size * image_size) as f64
    }
}

fn transfer_pixel(
    ticket_model: &ConvAutoencoder,
    mask: &PruneMask,
    train: &ImageDataset,
    test: &ImageDataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<f64> {
    let classes = cfg.dataset.downstream_classes.len() + 1; // plus background
    let mut model = transfer_model(ticket_model, classes, seed)?;
    model.head_frozen = true; // the image-level head plays no role here
    let channels = model.cfg.stage_channels[3];
    let mut head = PixelHead::random(classes, channels, &mut stream(seed, "pixel-head", 0));
    let stage = &cfg.transfer.stage;
    let targets = GradTargets {
        encoder: !cfg.transfer.freeze_encoder,
        head: false,
        decoder: false,
    };
    let labels = train.pixel_labels.as_ref().expect("pixel task needs label maps");
    let mut opt = SgdMomentum::new(stage.lr, stage.momentum);
    let mut order: Vec<usize> = (0..train.images.len()).collect();
    let zero_logits = vec![0.0; model.cfg.classes];
    for epoch in 0..stage.epochs {
        let mut rng = stream(seed, "transfer-pixel", epoch as u64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(stage.batch_size.max(1)) {
            let mut grads = ParamSnapshot::new();
            let mut gw = vec![0.0; head.w.len()];
            let mut gb = vec![0.0; head.b.len()];
            for &i in chunk {
                let pass = model.encoder_forward(&train.images[i])?;
                let (_, hw, hb, gfeat) = head.loss_and_grads(
                    pass.features.last().unwrap(),
                    &labels[i],
                    model.cfg.input_size,
                );
                for (a, b) in gw.iter_mut().zip(&hw) {
                    *a += b / chunk.len() as f64;
                }
                for (a, b) in gb.iter_mut().zip(&hb) {
                    *a += b / chunk.len() as f64;
                }
                let mut scaled = gfeat;
                for v in scaled.values_mut() {
                    *v /= chunk.len() as f64;
                }
                model.encoder_backward(&pass, &zero_logits, Some(&scaled), targets, &mut grads)?;
            }
            if targets.encoder {
                opt.step(&mut model, &grads, Some(mask));
            }
            head.step(&gw, &gb, stage.lr, stage.momentum);
        }
    }
    let test_labels = test.pixel_labels.as_ref().expect("pixel task needs label maps");
    let mut acc = 0.0;
    for (img, lab) in test.images.iter().zip(test_labels) {
        let pass = model.encoder_forward(img)?;
        acc += head.accuracy(pass.features.last().unwrap(), lab, model.cfg.input_size);
    }
    Ok(acc / test.images.len() as f64)
}

/// Runs the full pipeline once per hinted-stage candidate set and reports the
/// downstream pixel metric for each, marking the best.
pub fn ablate_hints(
    base: &PipelineConfig,
    stage_sets: &[Vec<usize>],
    seeds: &[u64],
) -> Result<AblationReport> {
    if stage_sets.is_empty() || seeds.is_empty() {
        return domain_err("ablation needs candidate sets and seeds");
    }
    let mut rows = Vec::new();
    for set in stage_sets {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.loss.hints.stages = set.clone();
            let out = run_pipeline(&cfg, seed)?;
            let last = out.rows.last().unwrap();
            rows.push(AblationRow {
                stages: set.clone(),
                seed,
                final_recon_loss: *out.decoder_loss_curve.last().unwrap_or(&f64::NAN),
                down_pixel_acc: last.down_pixel_acc.unwrap_or(f64::NAN),
                down_class_acc: last.down_class_acc.unwrap_or(f64::NAN),
            });
        }
    }
    // Mean pixel accuracy per candidate set; argmax marked.
    let mut best_idx = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for (i, set) in stage_sets.iter().enumerate() {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| &r.stages == set)
            .map(|r| r.down_pixel_acc)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if mean > best_mean {
            best_mean = mean;
            best_idx = i;
        }
    }
    Ok(AblationReport { rows, best_stages: stage_sets[best_idx].clone() })
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AblationRow {
    pub stages: Vec<usize>,
    pub seed: u64,
    pub final_recon_loss: f64,
    pub down_pixel_acc: f64,
    pub down_class_acc: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub best_stages: Vec<usize>,
}

impl AblationReport {
    pub fn csv(&self) -> CsvTable {
        use crate::data::fmt_f64 as f;
        let mut t = CsvTable::new(&[
            "stages",
            "seed",
            "final_recon_loss",
            "down_pixel_acc",
            "down_class_acc",
        ]);
        for r in &self.rows {
            let stages = r
                .stages
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join("+");
            t.push(vec![
                stages,
                r.seed.to_string(),
                f(r.final_recon_loss),
                f(r.down_pixel_acc),
                f(r.down_class_acc),
            ]);
        }
        t
    }
}

/// Joins per-ticket tables from several runs on the sparsity column.
pub fn compare_runs(
    runs: &[(String, Vec<TicketRow>)],
) -> Result<CsvTable> {
    if runs.len() < 2 {
        return domain_err("comparison needs at least two runs");
    }
    let base: Vec<f64> = runs[0].1.iter().map(|r| r.sparsity).collect();
    for (name, rows) in runs {
        let grid: Vec<f64> = rows.iter().map(|r| r.sparsity).collect();
        if grid != base {
            return domain_err(format!(
                "sparsity grid of run {name} does not match the first run"
            ));
        }
    }
    use crate::data::fmt_f64 as f;
    let mut header = vec!["round".to_string(), "sparsity".to_string()];
    for (name, _) in runs {
        header.push(format!("{name}_down_class_acc"));
        header.push(format!("{name}_down_pixel_acc"));
        header.push(format!("{name}_featmap_dist"));
    }
    for (name, _) in runs.iter().skip(1) {
        header.push(format!("{name}_minus_{}_pixel_acc", runs[0].0));
    }
    let mut table = CsvTable {
        header,
        rows: Vec::new(),
    };
    for (i, base_row) in runs[0].1.iter().enumerate() {
        let mut row = vec![base_row.round.to_string(), f(base_row.sparsity)];
        for (_, rows) in runs {
            let r = &rows[i];
            row.push(r.down_class_acc.map(f).unwrap_or_default());
            row.push(r.down_pixel_acc.map(f).unwrap_or_default());
            row.push(f(r.featmap_dist_ticket));
        }
        for (_, rows) in runs.iter().skip(1) {
            let delta = match (rows[i].down_pixel_acc, base_row.down_pixel_acc) {
                (Some(a), Some(b)) => f(a - b),
                _ => String::new(),
            };
            row.push(delta);
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// One-sided sign-test p-value for "treatment > control" over paired seeds:
/// `P(Binomial(n, 1/2) >= wins)` with ties dropped.
pub fn sign_test_p_value(treatment: &[f64], control: &[f64]) -> f64 {
    let mut wins = 0u32;
    let mut n = 0u32;
    for (t, c) in treatment.iter().zip(control) {
        if t > c {
            wins += 1;
            n += 1;
        } else if t < c {
            n += 1;
        }
    }
    if n == 0 {
        return 1.0;
    }
    // Tail sum of Binomial(n, 1/2).
    let mut acc = 0.0;
    for k in wins..=n {
        acc += binom(n, k);
    }
    acc / 2f64.powi(n as i32)
}

fn binom(n: u32, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Defaults sized for minutes-scale desk runs.
impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: AutoencoderConfig { classes: 2, ..Default::default() },
            dataset: PipelineDatasetConfig::default(),
            pretrain: StageConfig { epochs: 6, lr: 0.02, momentum: 0.9, batch_size: 32 },
            decoder: DecoderTrainConfig {
                epochs: 6,
                lr: 0.0002,
                momentum: 0.9,
                milestones: vec![4],
                gamma: 0.1,
                batch_size: 32,
            },
            loss: LossWeights {
                lambda: 10.0,
                hints: crate::models::HintConfig::new(0.1, vec![3, 4]),
            },
            rounds: 7,
            prune_rate: 0.2,
            round_finetune: StageConfig { epochs: 2, lr: 0.01, momentum: 0.9, batch_size: 32 },
            transfer: TransferConfig {
                stage: StageConfig { epochs: 3, lr: 0.02, momentum: 0.9, batch_size: 32 },
                rounds: None,
                freeze_encoder: false,
            },
            method: Method::ModifiedLth,
        }
    }
}
