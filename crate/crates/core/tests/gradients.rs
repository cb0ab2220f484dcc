//! Finite-difference verification of every analytic gradient path: each layer
//! type, the combined loss through a frozen decoder, and the 1D ReLU net.

use ticketlab_core::autoenc::{combined_loss, combined_loss_and_grads, LossWeights};
use ticketlab_core::models::autoencoder::GradTargets;
use ticketlab_core::models::{grad_check, AutoencoderConfig, ConvAutoencoder, HintConfig};
use ticketlab_core::params::ParamAccess;
use ticketlab_core::rng::stream;
use ticketlab_core::tensor::Image;
use rand::Rng;

fn tiny_model(seed: u64) -> ConvAutoencoder {
    let cfg = AutoencoderConfig {
        input_channels: 1,
        input_size: 16,
        stage_channels: [2, 3, 4, 5],
        classes: 3,
        kernel_half_width: 1,
        init_std: 1.0,
    };
    let mut rng = stream(seed, "gradtest-model", 0);
    ConvAutoencoder::random(cfg, &mut rng).unwrap()
}

fn tiny_batch(seed: u64, n: usize) -> (Vec<Image>, Vec<usize>) {
    let mut rng = stream(seed, "gradtest-data", 0);
    let images = (0..n)
        .map(|_| {
            let mut img = Image::zeros(1, 16, 16);
            for v in img.values_mut() {
                *v = rng.gen::<f64>();
            }
            img
        })
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..3)).collect();
    (images, labels)
}

fn flatten(model: &ConvAutoencoder, names: &[String]) -> Vec<f64> {
    names.iter().flat_map(|n| model.group(n).iter().copied()).collect()
}

fn unflatten(model: &mut ConvAutoencoder, names: &[String], theta: &[f64]) {
    let mut off = 0;
    for n in names {
        let g = model.group_mut(n);
        g.copy_from_slice(&theta[off..off + g.len()]);
        off += g.len();
    }
}

/// FD-checks the gradients of the selected groups under the given loss
/// weights and grad targets.
fn check_groups(
    model: &ConvAutoencoder,
    names: &[String],
    weights: &LossWeights,
    targets: GradTargets,
    images: &[Image],
    labels: Option<&[usize]>,
    tol: f64,
) {
    let batch: Vec<&Image> = images.iter().collect();
    let out = combined_loss_and_grads(model, &batch, labels, weights, targets).unwrap();
    let analytic: Vec<f64> = names
        .iter()
        .flat_map(|n| {
            out.grads
                .get(n)
                .cloned()
                .unwrap_or_else(|| vec![0.0; model.group(n).len()])
        })
        .collect();
    let theta = flatten(model, names);
    let labels_vec: Option<Vec<usize>> = labels.map(|l| l.to_vec());
    let report = grad_check(&theta, &analytic, 1e-5, |th| {
        let mut probe = model.clone();
        unflatten(&mut probe, names, th);
        let batch: Vec<&Image> = images.iter().collect();
        match &labels_vec {
            Some(l) => {
                let lb = combined_loss(&probe, &batch, l, weights).unwrap();
                (lb.total, lb.pattern)
            }
            None => {
                let lb = combined_loss_and_grads(
                    &probe,
                    &batch,
                    None,
                    weights,
                    GradTargets { encoder: false, head: false, decoder: false },
                )
                .unwrap();
                (lb.total, lb.pattern)
            }
        }
    })
    .unwrap();
    assert!(
        report.checked > theta.len() / 2,
        "kink filter skipped too much: {} of {}",
        report.checked,
        theta.len()
    );
    assert!(
        report.max_rel_err < tol,
        "worst relative error {} over {} checked",
        report.max_rel_err,
        report.checked
    );
}

#[test]
fn encoder_and_head_grads_through_frozen_decoder() {
    // The combined objective: cross-entropy plus lambda * reconstruction,
    // decoder frozen, gradient flowing to encoder and head only.
    let model = tiny_model(1);
    let (images, labels) = tiny_batch(2, 2);
    let weights =
        LossWeights::new(10.0, HintConfig::new(0.1, vec![3, 4])).unwrap();
    let targets = GradTargets { encoder: true, head: true, decoder: false };
    let names: Vec<String> = model
        .group_names()
        .into_iter()
        .filter(|n| n.starts_with("enc") || n.starts_with("head"))
        .collect();
    check_groups(&model, &names, &weights, targets, &images, Some(&labels), 1e-4);
}

#[test]
fn decoder_grads_under_reconstruction_loss() {
    let model = tiny_model(3);
    let (images, _) = tiny_batch(4, 2);
    let weights = LossWeights::new(1.0, HintConfig::new(0.1, vec![3, 4])).unwrap();
    let targets = GradTargets { encoder: false, head: false, decoder: true };
    let names: Vec<String> = model
        .group_names()
        .into_iter()
        .filter(|n| n.starts_with("dec"))
        .collect();
    check_groups(&model, &names, &weights, targets, &images, None, 1e-4);
}

#[test]
fn classification_only_grads() {
    // lambda = 0 exercises conv/relu/pool/linear/cross-entropy alone.
    let model = tiny_model(5);
    let (images, labels) = tiny_batch(6, 3);
    let weights = LossWeights::new(0.0, HintConfig::none()).unwrap();
    let targets = GradTargets { encoder: true, head: true, decoder: false };
    let names: Vec<String> = model
        .group_names()
        .into_iter()
        .filter(|n| n.starts_with("enc") || n.starts_with("head"))
        .collect();
    check_groups(&model, &names, &weights, targets, &images, Some(&labels), 1e-4);
}

#[test]
fn all_hint_stages_backprop_correctly() {
    let model = tiny_model(7);
    let (images, labels) = tiny_batch(8, 2);
    let weights = LossWeights::new(5.0, HintConfig::new(0.3, vec![1, 2, 3, 4])).unwrap();
    let targets = GradTargets { encoder: true, head: true, decoder: false };
    let names: Vec<String> = model
        .group_names()
        .into_iter()
        .filter(|n| n.starts_with("enc"))
        .collect();
    check_groups(&model, &names, &weights, targets, &images, Some(&labels), 1e-4);
}
