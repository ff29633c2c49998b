//! Threshold-gated forward path and activation sparsity measurement.
//!
//! Every hidden output neuron `i` owns a task-specific threshold `t_i > 0`.
//! The neuron fires (`m_i = 1`) iff `y_i - t_i >= 0`; its activation is
//! `a_i = y_i * m_i`. The classifier layer is never masked.

use serde::{Deserialize, Serialize};

use crate::error::{MimeError, Result};
use crate::forward::{layer_forward, relu_forward};
use crate::network::{NetworkSpec, Weights};
use crate::tensor::Tensor;

pub const THRESHOLD_FORMAT_VERSION: u32 = 1;

/// Per-task thresholds, one tensor per hidden layer shaped like its output.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    pub task_id: String,
    pub layers: Vec<Tensor>,
}

impl ThresholdSet {
    pub fn constant(spec: &NetworkSpec, task_id: impl Into<String>, value: f64) -> Result<Self> {
        let set = ThresholdSet {
            task_id: task_id.into(),
            layers: spec
                .hidden()
                .iter()
                .map(|l| Tensor::filled(&l.output_shape(), value))
                .collect(),
        };
        set.validate_for(spec)?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate_values(&self) -> Result<()> {
        for (l, t) in self.layers.iter().enumerate() {
            if let Some((index, &value)) = t
                .data()
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(MimeError::InvalidThreshold { layer: l, index, value });
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, spec: &NetworkSpec) -> Result<()> {
        let hidden = spec.hidden();
        if self.layers.len() != hidden.len() {
            return Err(MimeError::ThresholdMismatch(format!(
                "task `{}` has {} threshold layers, network has {} hidden layers",
                self.task_id,
                self.layers.len(),
                hidden.len()
            )));
        }
        for (i, (t, l)) in self.layers.iter().zip(hidden).enumerate() {
            if t.shape() != l.output_shape().as_slice() {
                return Err(MimeError::ThresholdMismatch(format!(
                    "task `{}` layer {i} thresholds {:?}, layer output {:?}",
                    self.task_id,
                    t.shape(),
                    l.output_shape()
                )));
            }
        }
        self.validate_values()
    }

    pub fn to_document(&self) -> ThresholdDocument {
        ThresholdDocument {
            format_version: THRESHOLD_FORMAT_VERSION,
            task_id: self.task_id.clone(),
            layers: self
                .layers
                .iter()
                .map(|t| ThresholdLayerDoc {
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("threshold document serializes")
    }

    /// Parses and validates a threshold document (shapes and positivity; not
    /// the match against a particular network).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ThresholdDocument =
            serde_json::from_str(text).map_err(|e| MimeError::Parse(e.to_string()))?;
        ThresholdSet::from_document(doc)
    }

    pub fn from_document(doc: ThresholdDocument) -> Result<Self> {
        if doc.format_version != THRESHOLD_FORMAT_VERSION {
            return Err(MimeError::Parse(format!(
                "unsupported threshold format_version {}",
                doc.format_version
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| Tensor::new(l.shape, l.values))
            .collect::<Result<Vec<_>>>()?;
        let set = ThresholdSet {
            task_id: doc.task_id,
            layers,
        };
        set.validate_values()?;
        Ok(set)
    }
}

/// Wire form of a [`ThresholdSet`]: row-major flat arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdDocument {
    pub format_version: u32,
    pub task_id: String,
    pub layers: Vec<ThresholdLayerDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdLayerDoc {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Gating of one layer: `m = [y >= t]`, `a = y * m`.
pub fn apply_mask(y: &Tensor, t: &Tensor) -> Result<(Tensor, Tensor)> {
    if y.shape() != t.shape() {
        return Err(MimeError::ThresholdMismatch(format!(
            "pre-activations {:?} vs thresholds {:?}",
            y.shape(),
            t.shape()
        )));
    }
    if let Some((index, &value)) = t.data().iter().enumerate().find(|(_, v)| v.is_nan() || **v <= 0.0) {
        return Err(MimeError::InvalidThreshold { layer: 0, index, value });
    }
    let (m, a): (Vec<f64>, Vec<f64>) = y
        .data()
        .iter()
        .zip(t.data())
        .map(|(&yi, &ti)| if yi - ti >= 0.0 { (1.0, yi) } else { (0.0, 0.0) })
        .unzip();
    let shape = y.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), m).expect("same shape"),
        Tensor::new(shape, a).expect("same shape"),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedForwardTrace {
    pub logits: Tensor,
    /// Hidden-layer pre-activations `Y`.
    pub pre_activations: Vec<Tensor>,
    /// Hidden-layer binary masks `M`.
    pub masks: Vec<Tensor>,
    /// Hidden-layer gated activations `A = Y ⊙ M`.
    pub activations: Vec<Tensor>,
}

pub fn masked_forward(
    spec: &NetworkSpec,
    weights: &Weights,
    thresholds: &ThresholdSet,
    input: &Tensor,
) -> Result<MaskedForwardTrace> {
    thresholds.validate_for(spec)?;
    if weights.layers.len() != spec.layers.len() {
        return Err(MimeError::InvalidSpec(format!(
            "{} weight sets for {} layers",
            weights.layers.len(),
            spec.layers.len()
        )));
    }
    let n_hidden = spec.hidden().len();
    let mut trace = MaskedForwardTrace {
        logits: Tensor::zeros(&[1]),
        pre_activations: Vec::with_capacity(n_hidden),
        masks: Vec::with_capacity(n_hidden),
        activations: Vec::with_capacity(n_hidden),
    };
    let mut x = input.clone();
    for (i, (layer, w)) in spec.layers.iter().zip(&weights.layers).enumerate() {
        let y = layer_forward(i, layer, w, &x)?;
        if !y.all_finite() {
            return Err(MimeError::NonFinite { layer: i });
        }
        if i == n_hidden {
            trace.logits = y;
            break;
        }
        let (m, a) = apply_mask(&y, &thresholds.layers[i]).map_err(|e| match e {
            MimeError::InvalidThreshold { index, value, .. } => {
                MimeError::InvalidThreshold { layer: i, index, value }
            }
            other => other,
        })?;
        x = a.clone();
        trace.pre_activations.push(y);
        trace.masks.push(m);
        trace.activations.push(a);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsitySource {
    Mime,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub label: String,
    pub value: f64,
    /// Verbatim decimal text when the value came from a reference table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl LayerSparsity {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        LayerSparsity {
            label: label.into(),
            value,
            text: None,
        }
    }

    /// Parses a tabulated decimal and keeps its text.
    pub fn from_decimal(label: impl Into<String>, text: &str) -> Result<Self> {
        let value: f64 = text
            .parse()
            .map_err(|_| MimeError::Parse(format!("bad sparsity decimal `{text}`")))?;
        let s = LayerSparsity {
            label: label.into(),
            value,
            text: Some(text.to_string()),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn display(&self) -> String {
        self.text.clone().unwrap_or_else(|| self.value.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.value) {
            Ok(())
        } else {
            Err(MimeError::Parse(format!(
                "sparsity of `{}` is {}, must be in [0, 1]",
                self.label, self.value
            )))
        }
    }
}

/// Fraction of zero-valued output activations per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityProfile {
    pub task_id: String,
    pub source: SparsitySource,
    pub layers: Vec<LayerSparsity>,
}

impl SparsityProfile {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.entry(label).map(|s| s.value)
    }

    pub fn entry(&self, label: &str) -> Option<&LayerSparsity> {
        self.layers.iter().find(|s| s.label == label)
    }

    pub fn mean(&self) -> f64 {
        if self.layers.is_empty() {
            return 0.0;
        }
        self.layers.iter().map(|s| s.value).sum::<f64>() / self.layers.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.layers {
            s.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: SparsityProfile =
            serde_json::from_str(text).map_err(|e| MimeError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Which forward path generates the activations being measured.
#[derive(Debug, Clone, Copy)]
pub enum SparsityMode<'a> {
    Mime(&'a ThresholdSet),
    Relu,
}

/// `s = zeros / (n_output_neurons * n_samples)` for every hidden layer.
pub fn measure_sparsity(
    spec: &NetworkSpec,
    weights: &Weights,
    mode: SparsityMode<'_>,
    task_id: &str,
    dataset: &[Tensor],
) -> Result<SparsityProfile> {
    if dataset.is_empty() {
        return Err(MimeError::EmptyDataset);
    }
    let hidden = spec.hidden();
    let mut zeros = vec![0usize; hidden.len()];
    for x in dataset {
        let acts = match mode {
            SparsityMode::Mime(t) => masked_forward(spec, weights, t, x)?.activations,
            SparsityMode::Relu => relu_forward(spec, weights, x)?.activations,
        };
        for (z, a) in zeros.iter_mut().zip(&acts) {
            *z += a.count_zeros();
        }
    }
    let layers = hidden
        .iter()
        .zip(zeros)
        .map(|(l, z)| {
            LayerSparsity::new(l.name.clone(), z as f64 / (l.n_outputs() * dataset.len()) as f64)
        })
        .collect();
    Ok(SparsityProfile {
        task_id: task_id.to_string(),
        source: match mode {
            SparsityMode::Mime(_) => SparsitySource::Mime,
            SparsityMode::Relu => SparsitySource::Relu,
        },
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, LayerShape};

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![v])
    }

    #[test]
    fn mask_cases() {
        let (m, a) = apply_mask(&scalar(0.5), &scalar(0.2)).unwrap();
        assert_eq!((m.data()[0], a.data()[0]), (1.0, 0.5));
        let (m, a) = apply_mask(&scalar(0.3), &scalar(0.3)).unwrap();
        assert_eq!((m.data()[0], a.data()[0]), (1.0, 0.3));
        let (m, a) = apply_mask(&scalar(-0.2), &scalar(0.1)).unwrap();
        assert_eq!((m.data()[0], a.data()[0]), (0.0, 0.0));
    }

    #[test]
    fn mask_rejects_bad_thresholds() {
        assert!(matches!(
            apply_mask(&scalar(1.0), &scalar(0.0)),
            Err(MimeError::InvalidThreshold { .. })
        ));
        assert!(apply_mask(&scalar(1.0), &scalar(-1.0)).is_err());
        assert!(apply_mask(&scalar(1.0), &scalar(f64::NAN)).is_err());
        assert!(apply_mask(&Tensor::from_vec(vec![1.0, 2.0]), &scalar(1.0)).is_err());
    }

    fn small_net() -> (NetworkSpec, Weights) {
        let spec = NetworkSpec::new(
            vec![
                LayerShape::conv("conv1", 1, 4, 4, 3, 3, 1, 1),
                LayerShape::fc("fc1", 48, 5),
                LayerShape::fc("out", 5, 2),
            ],
            2,
        )
        .unwrap();
        let w = init_network(&spec, 13).unwrap();
        (spec, w)
    }

    #[test]
    fn full_pruning_limit() {
        let (spec, w) = small_net();
        let t = ThresholdSet::constant(&spec, "t", 1e9).unwrap();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(|i| i as f64 / 4.0).collect()).unwrap();
        let tr = masked_forward(&spec, &w, &t, &x).unwrap();
        assert!(tr.activations.iter().all(|a| a.count_zeros() == a.len()));
        let zero_head = layer_forward(2, &spec.layers[2], &w.layers[2], &Tensor::zeros(&[5])).unwrap();
        assert_eq!(tr.logits, zero_head);
    }

    #[test]
    fn near_relu_limit() {
        let (spec, w) = small_net();
        let eps = 1e-12;
        let t = ThresholdSet::constant(&spec, "t", eps).unwrap();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        let tr = masked_forward(&spec, &w, &t, &x).unwrap();
        for (y, a) in tr.pre_activations.iter().zip(&tr.activations) {
            for (&yi, &ai) in y.data().iter().zip(a.data()) {
                assert_eq!(ai, if yi >= eps { yi } else { 0.0 });
            }
        }
    }

    #[test]
    fn thresholds_must_match_network() {
        let (spec, w) = small_net();
        let mut t = ThresholdSet::constant(&spec, "t", 0.1).unwrap();
        t.layers.pop();
        let x = Tensor::zeros(&[1, 4, 4]);
        assert!(matches!(
            masked_forward(&spec, &w, &t, &x),
            Err(MimeError::ThresholdMismatch(_))
        ));
    }

    #[test]
    fn sparsity_of_fully_pruned_layer_is_one() {
        let (spec, w) = small_net();
        let t = ThresholdSet::constant(&spec, "t", 1e9).unwrap();
        let data = vec![Tensor::filled(&[1, 4, 4], 1.0); 3];
        let p = measure_sparsity(&spec, &w, SparsityMode::Mime(&t), "t", &data).unwrap();
        assert!(p.layers.iter().all(|s| s.value == 1.0));
        assert_eq!(p.source, SparsitySource::Mime);
        assert_eq!(p.layers[0].label, "conv1");
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let (spec, w) = small_net();
        assert_eq!(
            measure_sparsity(&spec, &w, SparsityMode::Relu, "t", &[]).unwrap_err(),
            MimeError::EmptyDataset
        );
    }

    #[test]
    fn threshold_document_rejects_garbage() {
        assert!(ThresholdSet::from_json("{").is_err());
        let bad_version = r#"{"format_version":9,"task_id":"a","layers":[]}"#;
        assert!(ThresholdSet::from_json(bad_version).is_err());
        let bad_shape = r#"{"format_version":1,"task_id":"a","layers":[{"shape":[2],"values":[1.0]}]}"#;
        assert!(ThresholdSet::from_json(bad_shape).is_err());
        let non_positive = r#"{"format_version":1,"task_id":"a","layers":[{"shape":[1],"values":[0.0]}]}"#;
        assert!(matches!(
            ThresholdSet::from_json(non_positive),
            Err(MimeError::InvalidThreshold { .. })
        ));
    }

    #[test]
    fn published_decimal_keeps_text() {
        let s = LayerSparsity::from_decimal("conv7", "0.6100").unwrap();
        assert_eq!(s.value, 0.61);
        assert_eq!(s.display(), "0.6100");
        assert!(LayerSparsity::from_decimal("x", "1.5").is_err());
        assert!(LayerSparsity::from_decimal("x", "abc").is_err());
    }
}
