//! Network descriptions shared by the numeric engine and the counting models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MimeError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

/// Geometry of one conv or fully-connected layer.
///
/// Fully-connected layers use `h_in = w_in = k_h = k_w = 1`, `stride = 1`,
/// `pad = 0`, and `c_in` equal to the flattened input width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    #[serde(default)]
    pub name: String,
    pub kind: LayerKind,
    pub c_in: usize,
    #[serde(default = "one")]
    pub h_in: usize,
    #[serde(default = "one")]
    pub w_in: usize,
    pub c_out: usize,
    #[serde(default = "one")]
    pub k_h: usize,
    #[serde(default = "one")]
    pub k_w: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default)]
    pub has_bias: bool,
}

fn one() -> usize {
    1
}

const MAX_DIM: usize = 1 << 20;
const MAX_VOLUME: u64 = 1 << 48;

impl LayerShape {
    /// Square-kernel convolution.
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        name: impl Into<String>,
        c_in: usize,
        h_in: usize,
        w_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        LayerShape {
            name: name.into(),
            kind: LayerKind::Conv,
            c_in,
            h_in,
            w_in,
            c_out,
            k_h: k,
            k_w: k,
            stride,
            pad,
            has_bias: false,
        }
    }

    pub fn fc(name: impl Into<String>, c_in: usize, c_out: usize) -> Self {
        LayerShape {
            name: name.into(),
            kind: LayerKind::Fc,
            c_in,
            h_in: 1,
            w_in: 1,
            c_out,
            k_h: 1,
            k_w: 1,
            stride: 1,
            pad: 0,
            has_bias: false,
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn h_out(&self) -> usize {
        match self.kind {
            LayerKind::Fc => 1,
            LayerKind::Conv => (self.h_in + 2 * self.pad - self.k_h) / self.stride + 1,
        }
    }

    pub fn w_out(&self) -> usize {
        match self.kind {
            LayerKind::Fc => 1,
            LayerKind::Conv => (self.w_in + 2 * self.pad - self.k_w) / self.stride + 1,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.c_in * self.h_in * self.w_in
    }

    pub fn n_outputs(&self) -> usize {
        self.c_out * self.h_out() * self.w_out()
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv => vec![self.c_in, self.h_in, self.w_in],
            LayerKind::Fc => vec![self.c_in],
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv => vec![self.c_out, self.h_out(), self.w_out()],
            LayerKind::Fc => vec![self.c_out],
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv => vec![self.c_out, self.c_in, self.k_h, self.k_w],
            LayerKind::Fc => vec![self.c_out, self.c_in],
        }
    }

    pub fn n_weights(&self) -> usize {
        self.c_out * self.c_in * self.k_h * self.k_w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MimeError::InvalidSpec(format!("layer `{}`: {msg}", self.name)));
        if self.c_in == 0 || self.c_out == 0 {
            return bad("channel counts must be >= 1".into());
        }
        let dims = [
            self.c_in, self.h_in, self.w_in, self.c_out, self.k_h, self.k_w, self.stride, self.pad,
        ];
        if dims.iter().any(|&d| d > MAX_DIM) {
            return bad(format!("dimensions must be <= {MAX_DIM}"));
        }
        let volume = [self.c_out, self.c_in, self.k_h, self.k_w, self.h_in, self.w_in]
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
        if volume.is_none_or(|v| v > MAX_VOLUME) {
            return bad("layer is too large to describe".into());
        }
        match self.kind {
            LayerKind::Fc => {
                if self.h_in != 1 || self.w_in != 1 || self.k_h != 1 || self.k_w != 1 {
                    return bad("fc layers use unit spatial geometry".into());
                }
                if self.stride != 1 || self.pad != 0 {
                    return bad("fc layers use stride 1 and no padding".into());
                }
            }
            LayerKind::Conv => {
                if self.h_in == 0 || self.w_in == 0 || self.k_h == 0 || self.k_w == 0 {
                    return bad("spatial dims and kernel must be >= 1".into());
                }
                if self.stride == 0 {
                    return bad("stride must be >= 1".into());
                }
                if self.h_in + 2 * self.pad < self.k_h || self.w_in + 2 * self.pad < self.k_w {
                    return bad(format!(
                        "kernel {}x{} larger than padded input {}x{}",
                        self.k_h,
                        self.k_w,
                        self.h_in + 2 * self.pad,
                        self.w_in + 2 * self.pad
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Ordered layer stack; the last layer is the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerShape>,
    pub classifier_classes: usize,
}

impl NetworkSpec {
    /// Builds a spec, filling empty layer names positionally.
    pub fn new(mut layers: Vec<LayerShape>, classifier_classes: usize) -> Result<Self> {
        for (i, l) in layers.iter_mut().enumerate() {
            if l.name.is_empty() {
                l.name = format!("layer{}", i + 1);
            }
        }
        let spec = NetworkSpec {
            layers,
            classifier_classes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| MimeError::InvalidSpec("network has no layers".into()))?;
        for l in &self.layers {
            l.validate()?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            let ok = match next.kind {
                LayerKind::Conv => {
                    prev.kind == LayerKind::Conv
                        && next.c_in == prev.c_out
                        && next.h_in == prev.h_out()
                        && next.w_in == prev.w_out()
                }
                LayerKind::Fc => next.c_in == prev.n_outputs(),
            };
            if !ok {
                return Err(MimeError::InvalidSpec(format!(
                    "layer {} (`{}`) output {:?} does not feed layer {} (`{}`) input {:?}",
                    i,
                    prev.name,
                    prev.output_shape(),
                    i + 1,
                    next.name,
                    next.input_shape()
                )));
            }
        }
        if last.kind != LayerKind::Fc || last.c_out != self.classifier_classes {
            return Err(MimeError::InvalidSpec(format!(
                "last layer must be fc with {} outputs",
                self.classifier_classes
            )));
        }
        if self.classifier_classes == 0 {
            return Err(MimeError::InvalidSpec("classifier_classes must be >= 1".into()));
        }
        Ok(())
    }

    /// All layers except the classifier.
    pub fn hidden(&self) -> &[LayerShape] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn classifier(&self) -> &LayerShape {
        self.layers.last().expect("validated spec has layers")
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.layers[0].input_shape()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Same hidden stack with a new classifier of `classes` outputs.
    pub fn with_classifier(&self, classes: usize) -> Result<NetworkSpec> {
        let mut layers = self.layers.clone();
        let head = layers.last_mut().expect("validated spec has layers");
        head.c_out = classes;
        NetworkSpec::new(layers, classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub weight: Tensor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub layers: Vec<LayerWeights>,
}

impl Weights {
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(MimeError::InvalidSpec(format!(
                "{} weight sets for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (lw, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            lw.weight.validate()?;
            if lw.weight.shape() != l.weight_shape().as_slice() {
                return Err(MimeError::Shape {
                    layer: i,
                    expected: l.weight_shape(),
                    actual: lw.weight.shape().to_vec(),
                });
            }
            match (&lw.bias, l.has_bias) {
                (Some(b), true) => {
                    b.validate()?;
                    if b.shape() != [l.c_out] {
                        return Err(MimeError::Shape {
                            layer: i,
                            expected: vec![l.c_out],
                            actual: b.shape().to_vec(),
                        });
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(MimeError::InvalidSpec(format!(
                        "layer {i}: bias presence does not match has_bias={}",
                        l.has_bias
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Uniform Xavier initialisation, `b = sqrt(6 / (fan_in + fan_out))`.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Weights> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers
        .iter()
        .map(|l| init_layer(l, &mut rng))
        .collect();
    Ok(Weights { layers })
}

pub(crate) fn init_layer(l: &LayerShape, rng: &mut impl Rng) -> LayerWeights {
    let fan_in = (l.c_in * l.k_h * l.k_w) as f64;
    let fan_out = (l.c_out * l.k_h * l.k_w) as f64;
    let bound = (6.0 / (fan_in + fan_out)).sqrt();
    let data = (0..l.n_weights())
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    LayerWeights {
        weight: Tensor::new(l.weight_shape(), data).expect("shape from layer"),
        bias: l.has_bias.then(|| Tensor::zeros(&[l.c_out])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCounts {
    pub n_weights: u64,
    pub n_biases: u64,
    pub n_output_neurons: u64,
    pub n_macs_dense: u64,
}

impl LayerCounts {
    pub fn of(l: &LayerShape) -> Self {
        let n_output_neurons = l.n_outputs() as u64;
        LayerCounts {
            n_weights: l.n_weights() as u64,
            n_biases: if l.has_bias { l.c_out as u64 } else { 0 },
            n_output_neurons,
            n_macs_dense: n_output_neurons * (l.c_in * l.k_h * l.k_w) as u64,
        }
    }
}

pub fn count_params(spec: &NetworkSpec) -> Result<Vec<LayerCounts>> {
    spec.validate()?;
    Ok(spec.layers.iter().map(LayerCounts::of).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_conv() -> LayerShape {
        LayerShape::conv("c", 2, 8, 8, 4, 3, 1, 1)
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let spec = NetworkSpec::new(vec![toy_conv(), LayerShape::fc("fc", 256, 3)], 3).unwrap();
        assert_eq!(init_network(&spec, 7).unwrap(), init_network(&spec, 7).unwrap());
        assert_ne!(init_network(&spec, 7).unwrap(), init_network(&spec, 8).unwrap());
    }

    #[test]
    fn weight_shapes() {
        let spec = NetworkSpec::new(vec![LayerShape::fc("fc", 4, 3)], 3).unwrap();
        let w = init_network(&spec, 1).unwrap();
        assert_eq!(w.layers[0].weight.shape(), &[3, 4]);

        let spec = NetworkSpec::new(vec![toy_conv(), LayerShape::fc("fc", 256, 2)], 2).unwrap();
        let w = init_network(&spec, 1).unwrap();
        assert_eq!(w.layers[0].weight.shape(), &[4, 2, 3, 3]);
        assert_eq!(w.layers[0].weight.len(), 72);
    }

    #[test]
    fn init_respects_xavier_bound() {
        let spec = NetworkSpec::new(vec![toy_conv(), LayerShape::fc("fc", 256, 2)], 2).unwrap();
        let w = init_network(&spec, 3).unwrap();
        let b = (6.0f64 / (18.0 + 36.0)).sqrt();
        assert!(w.layers[0].weight.data().iter().all(|x| x.abs() <= b));
    }

    #[test]
    fn counts() {
        let c = LayerCounts::of(&toy_conv());
        assert_eq!(c.n_weights, 72);
        assert_eq!(c.n_output_neurons, 256);
        assert_eq!(c.n_macs_dense, 4608);
        let c = LayerCounts::of(&LayerShape::fc("fc", 512, 10));
        assert_eq!((c.n_weights, c.n_output_neurons, c.n_macs_dense), (5120, 10, 5120));
    }

    #[test]
    fn rejects_incompatible_stacks() {
        let err = NetworkSpec::new(vec![toy_conv(), LayerShape::fc("fc", 255, 2)], 2).unwrap_err();
        assert!(matches!(err, MimeError::InvalidSpec(_)));
        assert!(NetworkSpec::new(vec![toy_conv()], 4).is_err());
        assert!(NetworkSpec::new(vec![LayerShape::fc("fc", 4, 3)], 2).is_err());
        assert!(NetworkSpec::new(vec![], 2).is_err());
        let mut bad = toy_conv();
        bad.stride = 0;
        assert!(NetworkSpec::new(vec![bad, LayerShape::fc("fc", 256, 2)], 2).is_err());
        let big_kernel = LayerShape::conv("c", 1, 2, 2, 1, 5, 1, 0);
        assert!(big_kernel.validate().is_err());
    }

    #[test]
    fn output_geometry() {
        let l = LayerShape::conv("c", 3, 32, 32, 8, 3, 2, 1);
        assert_eq!((l.h_out(), l.w_out()), (16, 16));
        let l = LayerShape::conv("c", 3, 7, 5, 8, 3, 2, 0);
        assert_eq!((l.h_out(), l.w_out()), (3, 2));
    }
}
