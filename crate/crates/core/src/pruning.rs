//! Masks, pruning criteria and the iterative-pruning drivers.
//!
//! Three criteria live here: zeroing whole kernels by smallest |tap sum|
//! (the scaling-law experiments), global magnitude pruning pooled across all
//! prunable groups (the ticket drivers), and structured whole-filter removal
//! for the one-hidden-layer net. The drivers implement both schedules: rewind
//! to the pretrained weights after each round, or carry weights forward.

use crate::error::{domain_err, shape_err, Result};
use crate::params::{ParamAccess, ParamSnapshot};
use crate::tensor::{l2_norm, ConvTensor};
use crate::models::relu_net::{ReluConvNet, ScaleMode};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// Per-group keep bits. `true` keeps a weight, `false` prunes it.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    groups: BTreeMap<String, Vec<bool>>,
}

impl PruneMask {
    /// All-ones mask over the prunable groups of a model.
    pub fn dense(model: &impl ParamAccess) -> Self {
        let groups = model
            .group_names()
            .into_iter()
            .filter(|n| model.is_prunable(n))
            .map(|n| {
                let len = model.group(&n).len();
                (n, vec![true; len])
            })
            .collect();
        PruneMask { groups }
    }

    pub fn group_names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(|s| s.as_str())
    }

    pub fn group(&self, name: &str) -> Option<&[bool]> {
        self.groups.get(name).map(|v| v.as_slice())
    }

    pub fn total_bits(&self) -> usize {
        self.groups.values().map(|v| v.len()).sum()
    }

    pub fn zero_bits(&self) -> usize {
        self.groups.values().map(|v| v.iter().filter(|&&b| !b).count()).sum()
    }

    /// Exact zero-bit fraction.
    pub fn sparsity(&self) -> f64 {
        let total = self.total_bits();
        if total == 0 {
            return 0.0;
        }
        self.zero_bits() as f64 / total as f64
    }

    /// Zeroes masked entries of the matching model groups.
    pub fn apply(&self, model: &mut impl ParamAccess) {
        for (name, bits) in &self.groups {
            let values = model.group_mut(name);
            for (v, &keep) in values.iter_mut().zip(bits) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
    }

    /// Zeroes masked entries of a gradient snapshot so masked weights never
    /// receive updates.
    pub fn apply_to_snapshot(&self, grads: &mut ParamSnapshot) {
        for (name, bits) in &self.groups {
            if let Some(values) = grads.get_mut(name) {
                for (v, &keep) in values.iter_mut().zip(bits) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// True when every zero of `earlier` is still zero here.
    pub fn nests(&self, earlier: &PruneMask) -> bool {
        for (name, prev) in &earlier.groups {
            match self.groups.get(name) {
                None => return false,
                Some(cur) => {
                    if prev.iter().zip(cur).any(|(&p, &c)| !p && c) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// One pruning-round artifact: sparsity level plus the mask, with the rewind
/// checkpoint recorded by name.
#[derive(Debug, Clone)]
pub struct Ticket {
    pub round: usize,
    pub sparsity: f64,
    pub mask: PruneMask,
    pub rewind_reference: String,
}

/// Zeroes the whole kernels whose |tap sum| rank among the smallest
/// `floor(p * out_channels * in_channels)`; ties break toward the lower
/// `(i, j)` index. Returns the pruned tensor and the pruned-kernel count.
pub fn kernel_sum_prune(w: &ConvTensor, p: f64) -> Result<(ConvTensor, usize)> {
    if !(0.0..1.0).contains(&p) {
        return domain_err(format!("prune fraction {p} outside [0, 1)"));
    }
    let kernels = w.out_channels * w.in_channels;
    let count = (p * kernels as f64).floor() as usize;
    let mut order: Vec<usize> = (0..kernels).collect();
    let sums: Vec<f64> = (0..kernels)
        .map(|idx| w.kernel_sum(idx / w.in_channels, idx % w.in_channels).abs())
        .collect();
    order.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).unwrap().then(a.cmp(&b)));
    let mut out = w.clone();
    for &idx in order.iter().take(count) {
        for tap in out.kernel_mut(idx / w.in_channels, idx % w.in_channels) {
            *tap = 0.0;
        }
    }
    Ok((out, count))
}

/// Prunes the smallest-magnitude fraction `p` of the currently live weights,
/// pooled across every prunable group. Count rounding is floor.
pub fn global_magnitude_prune(
    model: &impl ParamAccess,
    mask: &PruneMask,
    p: f64,
) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&p) {
        return domain_err(format!("prune fraction {p} outside [0, 1)"));
    }
    let live = mask.total_bits() - mask.zero_bits();
    let count = (p * live as f64).floor() as usize;
    global_magnitude_prune_count(model, mask, count)
}

/// Prunes exactly `count` live weights, smallest |w| first; equal magnitudes
/// break toward the lower (group name, index) position.
pub fn global_magnitude_prune_count(
    model: &impl ParamAccess,
    mask: &PruneMask,
    count: usize,
) -> Result<PruneMask> {
    let mut live: Vec<(f64, usize, usize)> = Vec::new(); // (|w|, group idx, elem idx)
    let names: Vec<&str> = mask.group_names().collect();
    for (gi, name) in names.iter().enumerate() {
        let bits = mask.group(name).unwrap();
        let values = model.group(name);
        if values.len() != bits.len() {
            return shape_err(format!("mask for {name} does not match parameter count"));
        }
        for (ei, (&v, &keep)) in values.iter().zip(bits).enumerate() {
            if keep {
                live.push((v.abs(), gi, ei));
            }
        }
    }
    if live.is_empty() {
        return domain_err("all weights already masked");
    }
    if count > live.len() {
        return domain_err(format!("cannot prune {count} of {} live weights", live.len()));
    }
    live.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut next = mask.clone();
    for &(_, gi, ei) in live.iter().take(count) {
        next.groups.get_mut(names[gi]).unwrap()[ei] = false;
    }
    Ok(next)
}

/// How structured pruning selects the surviving filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FilterSelection {
    /// Drop the filters with the smallest l2 norm.
    SmallestNorm,
    /// Drop a uniformly random subset, independent of the weights.
    RandomSubset,
}

/// Chooses the surviving filter indices for structured pruning at rate `p`,
/// keeping `M = round(m * (1-p))` of them (5.1-style rates on power-of-two
/// filter counts round to the nearest achievable count). Returned sorted.
pub fn filter_keep_set(
    model: &ReluConvNet,
    p: f64,
    selection: FilterSelection,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&p) {
        return domain_err(format!("prune rate {p} outside [0, 1)"));
    }
    let m = model.filters();
    let keep_count = (m as f64 * (1.0 - p)).round() as usize;
    if keep_count == 0 {
        return domain_err("pruning would remove every filter");
    }
    let mut keep: Vec<usize> = match selection {
        FilterSelection::SmallestNorm => {
            let mut order: Vec<usize> = (0..m).collect();
            let norms: Vec<f64> = (0..m).map(|r| l2_norm(model.weights.filter(r))).collect();
            order.sort_by(|&a, &b| norms[a].partial_cmp(&norms[b]).unwrap().then(a.cmp(&b)));
            order[m - keep_count..].to_vec()
        }
        FilterSelection::RandomSubset => {
            let mut all: Vec<usize> = (0..m).collect();
            all.shuffle(rng);
            all[..keep_count].to_vec()
        }
    };
    keep.sort_unstable();
    Ok(keep)
}

/// Physically shrinks the net to the given filters, keeping their values and
/// signs and switching the scale to the pruned form.
pub fn keep_filters(model: &ReluConvNet, keep: &[usize]) -> ReluConvNet {
    let original = match model.scale {
        ScaleMode::Dense => model.filters(),
        ScaleMode::Pruned { original_filters } => original_filters,
    };
    let mut weights = ConvTensor::zeros(
        keep.len(),
        model.weights.in_channels,
        model.weights.half_width,
    );
    let mut signs = Vec::with_capacity(keep.len());
    for (new_r, &r) in keep.iter().enumerate() {
        weights.filter_mut(new_r).copy_from_slice(model.weights.filter(r));
        signs.push(model.signs[r]);
    }
    ReluConvNet { signs, weights, scale: ScaleMode::Pruned { original_filters: original } }
}

/// Removes whole filters (and their output signs) at rate `p`; the survivor
/// values are untouched and the scale switches to the pruned form.
pub fn structured_filter_prune(
    model: &ReluConvNet,
    p: f64,
    selection: FilterSelection,
    rng: &mut impl Rng,
) -> Result<ReluConvNet> {
    let keep = filter_keep_set(model, p, selection, rng)?;
    Ok(keep_filters(model, &keep))
}

/// Per-round schedule and rewind behaviour of the iterative drivers.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterativePruneConfig {
    pub rounds: usize,
    /// Per-round prune rate; the live count after round i targets
    /// `round(n0 * (1-p)^i)` so reported sparsities track `1 - (1-p)^i` to
    /// within half a weight.
    pub prune_rate: f64,
    /// Rewind surviving weights to the pretrained values after each round.
    pub rewind: bool,
}

/// What one round produced.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub ticket: Ticket,
    pub finetune_loss: f64,
}

/// Runs iterative magnitude pruning over the model's prunable groups.
///
/// Round i: finetune the masked model (caller-provided closure returns the
/// final loss), prune the smallest live weights down to the round's live
/// target, then either rewind surviving weights to `theta_pre` or carry them
/// forward. The `after_round` callback sees the model in its recorded ticket
/// state. Frozen groups are the closure's concern; the driver never touches
/// them.
pub fn iterative_prune<M, F, G>(
    model: &mut M,
    theta_pre: &ParamSnapshot,
    cfg: &IterativePruneConfig,
    rewind_reference: &str,
    mut finetune: F,
    mut after_round: G,
) -> Result<Vec<RoundOutcome>>
where
    M: ParamAccess,
    F: FnMut(&mut M, &PruneMask, usize) -> Result<f64>,
    G: FnMut(&M, &Ticket) -> Result<()>,
{
    if cfg.rounds == 0 {
        return domain_err("need at least one pruning round");
    }
    if !(0.0..1.0).contains(&cfg.prune_rate) || cfg.prune_rate == 0.0 {
        return domain_err(format!("per-round prune rate {} outside (0, 1)", cfg.prune_rate));
    }
    let mut mask = PruneMask::dense(model);
    let n0 = mask.total_bits();
    if (cfg.prune_rate * n0 as f64).floor() as usize == 0 {
        return domain_err("a round would prune zero weights");
    }
    let mut outcomes = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let loss = finetune(model, &mask, round)?;
        let live_target = (n0 as f64 * (1.0 - cfg.prune_rate).powi(round as i32)).round() as usize;
        let live_now = n0 - mask.zero_bits();
        let count = live_now.saturating_sub(live_target);
        mask = global_magnitude_prune_count(model, &mask, count)?;
        if cfg.rewind {
            model.restore(theta_pre)?;
        }
        mask.apply(model);
        let ticket = Ticket {
            round,
            sparsity: mask.sparsity(),
            mask: mask.clone(),
            rewind_reference: rewind_reference.to_string(),
        };
        after_round(model, &ticket)?;
        outcomes.push(RoundOutcome { ticket, finetune_loss: loss });
    }
    Ok(outcomes)
}
