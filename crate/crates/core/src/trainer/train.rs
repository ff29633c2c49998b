//! Training loops: per-task thresholds on a frozen parent, and the weight
//! baselines (parent, fine-tuned child, pruned-at-initialisation child).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::data::{shuffled_indices, Dataset};
use super::loss::{batch_grads, loss_and_grads_with, Activation, Batch, GateMode, LossReport};
use crate::error::{MimeError, Result};
use crate::mask::{masked_forward, ThresholdSet};
use crate::forward::relu_forward;
use crate::network::{init_layer, init_network, LayerWeights, NetworkSpec, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub lt: f64,
    pub accuracy: f64,
    pub mean_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTraining {
    pub thresholds: ThresholdSet,
    /// Final classifier head (unchanged when `train_head` is off).
    pub head: LayerWeights,
    pub history: Vec<EpochMetrics>,
}

impl ThresholdTraining {
    /// Parent hidden weights followed by this task's head.
    pub fn child_weights(&self, parent: &Weights) -> Weights {
        let mut layers = parent.layers.clone();
        *layers.last_mut().expect("non-empty") = self.head.clone();
        Weights { layers }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTraining {
    pub weights: Weights,
    pub history: Vec<EpochMetrics>,
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    rng
}

fn check_fit(spec: &NetworkSpec, dataset: &Dataset) -> Result<()> {
    dataset.validate()?;
    if dataset.classes != spec.classifier_classes {
        return Err(MimeError::InvalidArgument(format!(
            "dataset has {} classes, network classifier has {}",
            dataset.classes, spec.classifier_classes
        )));
    }
    Ok(())
}

#[derive(Default)]
struct EpochAccumulator {
    batches: usize,
    samples: usize,
    ce: f64,
    lt: f64,
    correct: f64,
    sparsity: f64,
}

impl EpochAccumulator {
    fn add(&mut self, report: &LossReport, sparsity: f64, n: usize) {
        self.batches += 1;
        self.samples += n;
        self.ce += report.ce;
        self.lt += report.lt;
        self.correct += report.accuracy * n as f64;
        self.sparsity += sparsity * n as f64;
    }

    fn finish(self, epoch: usize, beta: f64) -> EpochMetrics {
        let b = self.batches as f64;
        let r = LossReport::new(self.ce / b, self.lt / b, beta, 0.0);
        EpochMetrics {
            epoch,
            loss: r.total,
            ce: r.ce,
            lt: r.lt,
            accuracy: self.correct / self.samples as f64,
            mean_sparsity: self.sparsity / self.samples as f64,
        }
    }
}

/// Replaces the classifier of a parent network with a freshly initialised
/// head of `classes` outputs.
pub fn attach_head(
    spec: &NetworkSpec,
    weights: &Weights,
    classes: usize,
    seed: u64,
) -> Result<(NetworkSpec, Weights)> {
    weights.check_against(spec)?;
    let child = spec.with_classifier(classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut layers = weights.layers.clone();
    *layers.last_mut().expect("non-empty") = init_layer(child.classifier(), &mut rng);
    Ok((child, Weights { layers }))
}

/// Learns one threshold per hidden output neuron with every hidden weight
/// frozen. The classifier head is trained jointly when `train_head` is set.
pub fn train_thresholds(
    spec: &NetworkSpec,
    weights: &Weights,
    dataset: &Dataset,
    task_id: &str,
    config: &TrainConfig,
) -> Result<ThresholdTraining> {
    config.validate()?;
    weights.check_against(spec)?;
    check_fit(spec, dataset)?;
    let mut thresholds = ThresholdSet::constant(spec, task_id, config.threshold_init)?;
    let mut head = weights.layers.last().expect("non-empty").clone();
    let mut t_state = AdamState::for_thresholds(&thresholds);
    let mut h_state = AdamState::new(
        std::iter::once(head.weight.len()).chain(head.bias.as_ref().map(|b| b.len())),
    );
    let mut working = weights.clone();
    let mut rng = shuffle_rng(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let order = shuffled_indices(dataset.len(), &mut rng);
        let mut acc = EpochAccumulator::default();
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::select(dataset, idx);
            let g = loss_and_grads_with(spec, &working, &thresholds, &batch, config, GateMode::Hard)?;
            if !g.report.total.is_finite() {
                return Err(MimeError::Divergence { epoch, batch: b, loss: g.report.total });
            }
            acc.add(&g.report, g.mean_sparsity, batch.len());
            adam_step(&mut thresholds, &g.thresholds, &mut t_state, config)?;
            if let Some(hg) = g.head {
                update_layer(&mut head, &hg.weight, hg.bias.as_ref(), &mut h_state, config.learning_rate)?;
                *working.layers.last_mut().expect("non-empty") = head.clone();
            }
        }
        history.push(acc.finish(epoch, config.beta));
    }
    Ok(ThresholdTraining {
        thresholds,
        head,
        history,
    })
}

fn update_layer(
    layer: &mut LayerWeights,
    gw: &crate::tensor::Tensor,
    gb: Option<&crate::tensor::Tensor>,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let mut params: Vec<&mut [f64]> = vec![layer.weight.data_mut()];
    let mut grads: Vec<&[f64]> = vec![gw.data()];
    if let (Some(b), Some(g)) = (layer.bias.as_mut(), gb) {
        params.push(b.data_mut());
        grads.push(g.data());
    }
    state.update(&mut params, &grads, lr)
}

/// ReLU backprop training of every weight, starting from `init`. Entries of
/// `prune_mask` that are `true` are held at exactly zero.
pub fn train_weights(
    spec: &NetworkSpec,
    init: Weights,
    dataset: &Dataset,
    config: &TrainConfig,
    prune_mask: Option<&[Vec<bool>]>,
) -> Result<WeightTraining> {
    config.validate()?;
    init.check_against(spec)?;
    check_fit(spec, dataset)?;
    if let Some(mask) = prune_mask {
        let ok = mask.len() == spec.layers.len()
            && mask.iter().zip(&init.layers).all(|(m, w)| m.len() == w.weight.len());
        if !ok {
            return Err(MimeError::InvalidArgument("prune mask does not match the weights".into()));
        }
    }
    let mut weights = init;
    apply_prune(&mut weights, prune_mask);
    let sizes: Vec<usize> = weights
        .layers
        .iter()
        .flat_map(|l| std::iter::once(l.weight.len()).chain(l.bias.as_ref().map(|b| b.len())))
        .collect();
    let mut state = AdamState::new(sizes);
    let trainable = vec![true; spec.layers.len()];
    let mut rng = shuffle_rng(config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let order = shuffled_indices(dataset.len(), &mut rng);
        let mut acc = EpochAccumulator::default();
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::select(dataset, idx);
            let g = batch_grads(spec, &weights, &Activation::Relu, &batch, &trainable)?;
            let report = LossReport::new(g.ce, 0.0, 0.0, g.accuracy);
            if !report.total.is_finite() {
                return Err(MimeError::Divergence { epoch, batch: b, loss: report.total });
            }
            acc.add(&report, g.mean_sparsity, batch.len());
            let grads: Vec<&[f64]> = g
                .weights
                .iter()
                .flat_map(|wg| {
                    let wg = wg.as_ref().expect("all layers trainable");
                    std::iter::once(wg.weight.data()).chain(wg.bias.as_ref().map(|b| b.data()))
                })
                .collect();
            let mut params: Vec<&mut [f64]> = weights
                .layers
                .iter_mut()
                .flat_map(|l| {
                    std::iter::once(l.weight.data_mut()).chain(l.bias.as_mut().map(|b| b.data_mut()))
                })
                .collect();
            state.update(&mut params, &grads, config.learning_rate)?;
            apply_prune(&mut weights, prune_mask);
        }
        history.push(acc.finish(epoch, 0.0));
    }
    Ok(WeightTraining { weights, history })
}

fn apply_prune(weights: &mut Weights, mask: Option<&[Vec<bool>]>) {
    if let Some(mask) = mask {
        for (l, m) in weights.layers.iter_mut().zip(mask) {
            for (w, &pruned) in l.weight.data_mut().iter_mut().zip(m) {
                if pruned {
                    *w = 0.0;
                }
            }
        }
    }
}

/// Marks the `ceil(fraction * n)` smallest-magnitude weights of every layer.
/// Ties are broken by index.
pub fn magnitude_prune_mask(weights: &Weights, fraction: f64) -> Result<Vec<Vec<bool>>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(MimeError::InvalidArgument(format!(
            "prune fraction must be in [0, 1), got {fraction}"
        )));
    }
    Ok(weights
        .layers
        .iter()
        .map(|l| {
            let w = l.weight.data();
            let k = (fraction * w.len() as f64).ceil() as usize;
            let mut order: Vec<usize> = (0..w.len()).collect();
            order.sort_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()).then(a.cmp(&b)));
            let mut mask = vec![false; w.len()];
            for &i in &order[..k] {
                mask[i] = true;
            }
            mask
        })
        .collect())
}

pub fn train_parent(spec: &NetworkSpec, dataset: &Dataset, config: &TrainConfig) -> Result<WeightTraining> {
    train_weights(spec, init_network(spec, config.seed)?, dataset, config, None)
}

/// Conventional transfer baseline: every weight of the child network is
/// trained, starting from the parent's hidden weights and a fresh head.
pub fn train_finetuned(
    spec: &NetworkSpec,
    init: Weights,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<WeightTraining> {
    train_weights(spec, init, dataset, config, None)
}

/// Pruning at initialisation: the mask is fixed from the seeded initial
/// weights and held through training.
pub fn train_pruned(
    spec: &NetworkSpec,
    dataset: &Dataset,
    config: &TrainConfig,
    prune_fraction: f64,
) -> Result<WeightTraining> {
    let init = init_network(spec, config.seed)?;
    let mask = magnitude_prune_mask(&init, prune_fraction)?;
    train_weights(spec, init, dataset, config, Some(&mask))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_sparsity: f64,
}

/// Accuracy and mean hidden sparsity under hard gating (`Some`) or ReLU.
pub fn evaluate(
    spec: &NetworkSpec,
    weights: &Weights,
    thresholds: Option<&ThresholdSet>,
    dataset: &Dataset,
) -> Result<Evaluation> {
    dataset.validate()?;
    let (mut correct, mut sparsity) = (0usize, 0.0);
    for (x, &label) in dataset.inputs.iter().zip(&dataset.labels) {
        let (logits, acts) = match thresholds {
            Some(t) => {
                let tr = masked_forward(spec, weights, t, x)?;
                (tr.logits, tr.activations)
            }
            None => {
                let tr = relu_forward(spec, weights, x)?;
                (tr.logits, tr.activations)
            }
        };
        let z = logits.data();
        let mut best = 0;
        for i in 1..z.len() {
            if z[i] > z[best] {
                best = i;
            }
        }
        correct += (best == label) as usize;
        if !acts.is_empty() {
            sparsity += acts.iter().map(|a| a.count_zeros() as f64 / a.len() as f64).sum::<f64>()
                / acts.len() as f64;
        }
    }
    let n = dataset.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        mean_sparsity: sparsity / n,
    })
}
