//! Parameter, threshold and storage accounting.

use serde::{Deserialize, Serialize};

use crate::error::{MimeError, Result};
use crate::network::{LayerKind, LayerShape, NetworkSpec};

/// Which hidden layers carry per-neuron thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    #[default]
    AllHidden,
    ConvOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerFootprint {
    pub name: String,
    pub n_weights: u64,
    pub n_thresholds: u64,
    pub n_output_neurons: u64,
    pub n_macs_dense: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFootprint {
    pub layers: Vec<LayerFootprint>,
    pub bytes_per_word: u64,
    pub total_weights: u64,
    pub total_thresholds: u64,
    pub total_output_neurons: u64,
    pub total_macs_dense: u64,
}

pub const DEFAULT_BYTES_PER_WORD: u64 = 2;

fn layer_footprint(l: &LayerShape, thresholded: bool) -> LayerFootprint {
    let n_out = l.n_outputs() as u64;
    LayerFootprint {
        name: l.name.clone(),
        n_weights: l.n_weights() as u64,
        n_thresholds: if thresholded { n_out } else { 0 },
        n_output_neurons: n_out,
        n_macs_dense: n_out * (l.c_in * l.k_h * l.k_w) as u64,
    }
}

impl ModelFootprint {
    pub fn from_layers(layers: Vec<LayerFootprint>, bytes_per_word: u64) -> Self {
        ModelFootprint {
            bytes_per_word,
            total_weights: layers.iter().map(|l| l.n_weights).sum(),
            total_thresholds: layers.iter().map(|l| l.n_thresholds).sum(),
            total_output_neurons: layers.iter().map(|l| l.n_output_neurons).sum(),
            total_macs_dense: layers.iter().map(|l| l.n_macs_dense).sum(),
            layers,
        }
    }

    pub fn weight_bytes(&self) -> u64 {
        self.total_weights * self.bytes_per_word
    }

    pub fn threshold_bytes(&self) -> u64 {
        self.total_thresholds * self.bytes_per_word
    }

    pub fn layer(&self, name: &str) -> Option<&LayerFootprint> {
        self.layers.iter().find(|l| l.name == name)
    }
}

/// Per-layer counts; the classifier never carries thresholds.
pub fn footprint(spec: &NetworkSpec, scope: ThresholdScope) -> Result<ModelFootprint> {
    spec.validate()?;
    let last = spec.layers.len() - 1;
    let layers = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let thresholded = i < last
                && match scope {
                    ThresholdScope::AllHidden => true,
                    ThresholdScope::ConvOnly => l.kind == LayerKind::Conv,
                };
            layer_footprint(l, thresholded)
        })
        .collect();
    Ok(ModelFootprint::from_layers(layers, DEFAULT_BYTES_PER_WORD))
}

/// Every task (parent included) keeps its own weight set.
pub fn storage_conventional(fp: &ModelFootprint, n_tasks_total: u64) -> Result<u64> {
    if n_tasks_total == 0 {
        return Err(MimeError::InvalidArgument("n_tasks_total must be >= 1".into()));
    }
    Ok(n_tasks_total * fp.weight_bytes())
}

/// One shared weight set plus a threshold set (and optional head) per child.
pub fn storage_mime(fp: &ModelFootprint, n_children: u64, head_bytes_per_task: u64) -> u64 {
    fp.weight_bytes() + n_children * (fp.threshold_bytes() + head_bytes_per_task)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoragePlan {
    pub n_children: u64,
    pub conventional_bytes: u64,
    pub mime_bytes: u64,
    pub ratio: f64,
    pub exceeds_n_times: bool,
    pub head_bytes_per_task: u64,
}

pub fn storage_plan(fp: &ModelFootprint, n_children: u64, head_bytes_per_task: u64) -> Result<StoragePlan> {
    if n_children == 0 {
        return Err(MimeError::InvalidArgument("n_children must be >= 1".into()));
    }
    if fp.total_weights == 0 {
        return Err(MimeError::InvalidArgument("network has no weights".into()));
    }
    let conventional_bytes = storage_conventional(fp, n_children + 1)?;
    let mime_bytes = storage_mime(fp, n_children, head_bytes_per_task);
    let ratio = conventional_bytes as f64 / mime_bytes as f64;
    Ok(StoragePlan {
        n_children,
        conventional_bytes,
        mime_bytes,
        ratio,
        exceeds_n_times: conventional_bytes as u128 > n_children as u128 * mime_bytes as u128,
        head_bytes_per_task,
    })
}

/// `((n+1)|W|) / (|W| + n|T|)` on raw word counts, with the `> n` flag.
pub fn savings_ratio_words(w: f64, t: f64, n: u64) -> Result<(f64, bool)> {
    if n == 0 {
        return Err(MimeError::InvalidArgument("n_children must be >= 1".into()));
    }
    if !(w > 0.0 && t >= 0.0) {
        return Err(MimeError::InvalidArgument(format!("need |W| > 0 and |T| >= 0, got {w}, {t}")));
    }
    let nf = n as f64;
    let ratio = (nf + 1.0) * w / (w + nf * t);
    // `ratio > n` is equivalent to `|W| > n^2 |T|`; the product form is exact
    // for integer counts where the rounded quotient may land on either side.
    Ok((ratio, w > nf * nf * t))
}

pub fn savings_ratio(fp: &ModelFootprint, n_children: u64) -> Result<(f64, bool)> {
    savings_ratio_words(fp.total_weights as f64, fp.total_thresholds as f64, n_children)
}
