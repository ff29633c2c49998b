//! Cross-entropy loss and backpropagation through ReLU or threshold-gated
//! hidden layers.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::Dataset;
use super::surrogate::{ramp, surrogate_grad, SurrogateSpec};
use crate::error::{MimeError, Result};
use crate::forward::{layer_backward, layer_forward};
use crate::mask::ThresholdSet;
use crate::network::{NetworkSpec, Weights};
use crate::tensor::Tensor;

/// How a thresholded neuron gates its pre-activation in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    /// `a = y * [y >= t]`, backward through the surrogate.
    Hard,
    /// `a = y * R(y - t)` with `R` the surrogate's ramp; fully differentiable.
    Relaxed,
}

#[derive(Debug, Clone, Copy)]
pub enum Activation<'a> {
    Relu,
    Threshold {
        thresholds: &'a ThresholdSet,
        gate: GateMode,
        surrogate: SurrogateSpec,
        input_term: bool,
    },
}

impl<'a> Activation<'a> {
    pub fn hard(thresholds: &'a ThresholdSet, config: &TrainConfig) -> Self {
        Activation::Threshold {
            thresholds,
            gate: GateMode::Hard,
            surrogate: config.surrogate,
            input_term: config.surrogate_input_term,
        }
    }

    pub fn relaxed(thresholds: &'a ThresholdSet, config: &TrainConfig) -> Self {
        Activation::Threshold {
            thresholds,
            gate: GateMode::Relaxed,
            surrogate: config.surrogate,
            input_term: true,
        }
    }
}

/// A borrowed mini-batch.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<'a> Batch<'a> {
    pub fn select(ds: &'a Dataset, indices: &[usize]) -> Self {
        Batch {
            inputs: indices.iter().map(|&i| &ds.inputs[i]).collect(),
            labels: indices.iter().map(|&i| ds.labels[i]).collect(),
            classes: ds.classes,
        }
    }

    pub fn whole(ds: &'a Dataset) -> Self {
        Batch {
            inputs: ds.inputs.iter().collect(),
            labels: ds.labels.clone(),
            classes: ds.classes,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub ce: f64,
    /// `sum exp(t)` over every threshold; 0 when no thresholds are present.
    pub lt: f64,
    pub accuracy: f64,
}

impl LossReport {
    pub fn new(ce: f64, lt: f64, beta: f64, accuracy: f64) -> Self {
        LossReport {
            total: ce + beta * lt,
            ce,
            lt,
            accuracy,
        }
    }
}

/// `L_t = sum_i exp(t_i)` and its gradient `exp(t_i)`.
pub fn threshold_reg(thresholds: &ThresholdSet) -> (f64, Vec<Tensor>) {
    let grads: Vec<Tensor> = thresholds.layers.iter().map(|t| t.map(f64::exp)).collect();
    let lt = grads.iter().flat_map(|g| g.data()).sum();
    (lt, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrad {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Raw per-batch quantities, summed in sample order.
#[derive(Debug, Clone)]
pub struct BatchGrads {
    pub ce: f64,
    pub accuracy: f64,
    /// Mean over samples and hidden layers of the per-layer zero fraction.
    pub mean_sparsity: f64,
    /// One entry per layer; `Some` for trainable layers.
    pub weights: Vec<Option<WeightGrad>>,
    /// Backprop part of dL/dt (no regularizer), when thresholds are active.
    pub thresholds: Option<Vec<Tensor>>,
}

struct SampleTrace {
    layer_inputs: Vec<Tensor>,
    dady: Vec<Vec<f64>>,
    dadt: Vec<Vec<f64>>,
    logits: Tensor,
    zero_fraction: f64,
}

fn gate_forward(
    layer: usize,
    y: &Tensor,
    act: &Activation<'_>,
    want_dadt: bool,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut a = vec![0.0; n];
    let mut dady = vec![0.0; n];
    let mut dadt = if want_dadt { vec![0.0; n] } else { Vec::new() };
    match act {
        Activation::Relu => {
            for (i, &yi) in y.data().iter().enumerate() {
                if yi > 0.0 {
                    a[i] = yi;
                    dady[i] = 1.0;
                }
            }
        }
        Activation::Threshold {
            thresholds,
            gate,
            surrogate,
            input_term,
        } => {
            let t = &thresholds.layers[layer];
            if t.shape() != y.shape() {
                return Err(MimeError::ThresholdMismatch(format!(
                    "layer {layer}: thresholds {:?}, outputs {:?}",
                    t.shape(),
                    y.shape()
                )));
            }
            for (i, (&yi, &ti)) in y.data().iter().zip(t.data()).enumerate() {
                let u = yi - ti;
                let g = surrogate_grad(u, surrogate);
                let gate_value = match gate {
                    GateMode::Hard => {
                        if u >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    GateMode::Relaxed => ramp(u, surrogate),
                };
                a[i] = yi * gate_value;
                dady[i] = gate_value + if *input_term { yi * g } else { 0.0 };
                if want_dadt {
                    dadt[i] = -yi * g;
                }
            }
        }
    }
    Ok((Tensor::new(y.shape().to_vec(), a).expect("same shape"), dady, dadt))
}

fn forward_sample(
    spec: &NetworkSpec,
    weights: &Weights,
    act: &Activation<'_>,
    input: &Tensor,
    want_dadt: bool,
) -> Result<SampleTrace> {
    let n_hidden = spec.layers.len() - 1;
    let mut layer_inputs = Vec::with_capacity(spec.layers.len());
    let mut dady = Vec::with_capacity(n_hidden);
    let mut dadt = Vec::with_capacity(n_hidden);
    let mut zero_fraction = 0.0;
    let mut x = input.clone();
    for (i, (layer, w)) in spec.layers.iter().zip(&weights.layers).enumerate() {
        let y = layer_forward(i, layer, w, &x)?;
        if !y.all_finite() {
            return Err(MimeError::NonFinite { layer: i });
        }
        layer_inputs.push(x);
        if i == n_hidden {
            return Ok(SampleTrace {
                layer_inputs,
                dady,
                dadt,
                logits: y,
                zero_fraction: if n_hidden == 0 { 0.0 } else { zero_fraction / n_hidden as f64 },
            });
        }
        let (a, d_y, d_t) = gate_forward(i, &y, act, want_dadt)?;
        zero_fraction += a.count_zeros() as f64 / a.len() as f64;
        dady.push(d_y);
        dadt.push(d_t);
        x = a;
    }
    unreachable!("validated spec ends with a classifier")
}

/// Stable softmax cross-entropy; returns (loss, dL/dz, argmax == label).
fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>, bool) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    let grad = logits.iter().map(|z| (z - lse).exp()).collect::<Vec<_>>();
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    let mut g = grad;
    g[label] -= 1.0;
    (lse - logits[label], g, best == label)
}

fn check_batch(spec: &NetworkSpec, weights: &Weights, batch: &Batch<'_>) -> Result<()> {
    if batch.is_empty() {
        return Err(MimeError::EmptyDataset);
    }
    if weights.layers.len() != spec.layers.len() {
        return Err(MimeError::InvalidSpec(format!(
            "{} weight sets for {} layers",
            weights.layers.len(),
            spec.layers.len()
        )));
    }
    let classes = spec.classifier_classes;
    if let Some(&label) = batch.labels.iter().find(|&&l| l >= classes) {
        return Err(MimeError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

fn check_activation(spec: &NetworkSpec, act: &Activation<'_>) -> Result<()> {
    if let Activation::Threshold { thresholds, surrogate, .. } = act {
        thresholds.validate_for(spec)?;
        surrogate.validate()?;
    }
    Ok(())
}

/// Mean cross-entropy over the batch and gradients for the requested parts.
pub fn batch_grads(
    spec: &NetworkSpec,
    weights: &Weights,
    act: &Activation<'_>,
    batch: &Batch<'_>,
    trainable: &[bool],
) -> Result<BatchGrads> {
    check_batch(spec, weights, batch)?;
    check_activation(spec, act)?;
    if trainable.len() != spec.layers.len() {
        return Err(MimeError::InvalidArgument(format!(
            "trainable mask has {} entries for {} layers",
            trainable.len(),
            spec.layers.len()
        )));
    }
    let want_thr = matches!(act, Activation::Threshold { .. });
    let n_layers = spec.layers.len();
    // Input gradient of layer l is needed if anything below l wants a gradient.
    let need_input: Vec<bool> = (0..n_layers)
        .map(|l| l > 0 && (want_thr || trainable[..l].iter().any(|&t| t)))
        .collect();

    let mut wg: Vec<Option<WeightGrad>> = spec
        .layers
        .iter()
        .zip(&weights.layers)
        .zip(trainable)
        .map(|((l, w), &t)| {
            t.then(|| WeightGrad {
                weight: Tensor::zeros(&l.weight_shape()),
                bias: w.bias.as_ref().map(|_| Tensor::zeros(&[l.c_out])),
            })
        })
        .collect();
    let mut tg: Option<Vec<Tensor>> =
        want_thr.then(|| spec.hidden().iter().map(|l| Tensor::zeros(&l.output_shape())).collect());

    let scale = 1.0 / batch.len() as f64;
    let (mut ce, mut correct, mut sparsity) = (0.0, 0usize, 0.0);
    for (x, &label) in batch.inputs.iter().zip(&batch.labels) {
        let tr = forward_sample(spec, weights, act, x, want_thr)?;
        let (loss, dz, hit) = softmax_ce(tr.logits.data(), label);
        ce += loss;
        correct += hit as usize;
        sparsity += tr.zero_fraction;
        let mut g = Tensor::new(tr.logits.shape().to_vec(), dz.into_iter().map(|v| v * scale).collect())
            .expect("logit shape");
        for l in (0..n_layers).rev() {
            if !trainable[l] && !need_input[l] {
                break;
            }
            let grads = layer_backward(l, &spec.layers[l], &weights.layers[l], &tr.layer_inputs[l], &g, trainable[l])?;
            if let Some(acc) = wg[l].as_mut() {
                add_into(&mut acc.weight, grads.weight.as_ref().expect("requested"));
                if let (Some(ab), Some(gb)) = (acc.bias.as_mut(), grads.bias.as_ref()) {
                    add_into(ab, gb);
                }
            }
            if !need_input[l] {
                break;
            }
            let h = l - 1;
            let ga = grads.input;
            if let Some(tg) = tg.as_mut() {
                for ((acc, &gi), &d) in tg[h].data_mut().iter_mut().zip(ga.data()).zip(&tr.dadt[h]) {
                    *acc += gi * d;
                }
            }
            let gy: Vec<f64> = ga.data().iter().zip(&tr.dady[h]).map(|(a, b)| a * b).collect();
            g = Tensor::new(spec.layers[h].output_shape(), gy).expect("hidden output shape");
        }
    }
    let n = batch.len() as f64;
    Ok(BatchGrads {
        ce: ce / n,
        accuracy: correct as f64 / n,
        mean_sparsity: sparsity / n,
        weights: wg,
        thresholds: tg,
    })
}

fn add_into(acc: &mut Tensor, g: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

/// Threshold-training objective with hidden weights frozen.
#[derive(Debug, Clone)]
pub struct ThresholdGrads {
    pub report: LossReport,
    /// Full gradient: backprop term plus `beta * exp(t)`.
    pub thresholds: Vec<Tensor>,
    /// Classifier-head gradient when the head is trained.
    pub head: Option<WeightGrad>,
    pub mean_sparsity: f64,
}

/// Loss and threshold gradients under `gate`; the head gradient is returned
/// when `config.train_head` is set.
pub fn loss_and_grads_with(
    spec: &NetworkSpec,
    weights: &Weights,
    thresholds: &ThresholdSet,
    batch: &Batch<'_>,
    config: &TrainConfig,
    gate: GateMode,
) -> Result<ThresholdGrads> {
    let act = match gate {
        GateMode::Hard => Activation::hard(thresholds, config),
        GateMode::Relaxed => Activation::relaxed(thresholds, config),
    };
    let mut trainable = vec![false; spec.layers.len()];
    *trainable.last_mut().expect("non-empty") = config.train_head;
    let mut bg = batch_grads(spec, weights, &act, batch, &trainable)?;
    let (lt, reg) = threshold_reg(thresholds);
    let mut tg = bg.thresholds.take().expect("threshold mode");
    for (g, r) in tg.iter_mut().zip(&reg) {
        for (a, b) in g.data_mut().iter_mut().zip(r.data()) {
            *a += config.beta * b;
        }
    }
    Ok(ThresholdGrads {
        report: LossReport::new(bg.ce, lt, config.beta, bg.accuracy),
        thresholds: tg,
        head: bg.weights.pop().flatten(),
        mean_sparsity: bg.mean_sparsity,
    })
}

/// Hard-gated loss and total threshold gradients.
pub fn loss_and_grads(
    spec: &NetworkSpec,
    weights: &Weights,
    thresholds: &ThresholdSet,
    batch: &Batch<'_>,
    config: &TrainConfig,
) -> Result<(LossReport, Vec<Tensor>)> {
    let g = loss_and_grads_with(spec, weights, thresholds, batch, config, GateMode::Hard)?;
    Ok((g.report, g.thresholds))
}

/// Forward-only loss under `act`; `beta` weights the regularizer when
/// thresholds are active.
pub fn batch_loss(
    spec: &NetworkSpec,
    weights: &Weights,
    act: &Activation<'_>,
    batch: &Batch<'_>,
    beta: f64,
) -> Result<LossReport> {
    check_batch(spec, weights, batch)?;
    check_activation(spec, act)?;
    let (mut ce, mut correct) = (0.0, 0usize);
    for (x, &label) in batch.inputs.iter().zip(&batch.labels) {
        let tr = forward_sample(spec, weights, act, x, false)?;
        let (loss, _, hit) = softmax_ce(tr.logits.data(), label);
        ce += loss;
        correct += hit as usize;
    }
    let lt = match act {
        Activation::Threshold { thresholds, .. } => threshold_reg(thresholds).0,
        Activation::Relu => 0.0,
    };
    let n = batch.len() as f64;
    Ok(LossReport::new(ce / n, lt, beta, correct as f64 / n))
}
