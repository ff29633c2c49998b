//! Forward and backward passes for conv / fc layers.
//!
//! Convolution is direct cross-correlation with zero padding. Inputs to fc
//! layers are flattened, so a `[c, h, w]` feature map feeds an fc layer with
//! `c_in = c * h * w` without an explicit reshape.

use crate::error::{MimeError, Result};
use crate::network::{LayerKind, LayerShape, LayerWeights, NetworkSpec, Weights};
use crate::tensor::Tensor;

fn check_input(index: usize, layer: &LayerShape, input: &Tensor) -> Result<()> {
    let ok = match layer.kind {
        LayerKind::Conv => input.shape() == layer.input_shape().as_slice(),
        LayerKind::Fc => input.len() == layer.c_in,
    };
    if ok {
        Ok(())
    } else {
        Err(MimeError::Shape {
            layer: index,
            expected: layer.input_shape(),
            actual: input.shape().to_vec(),
        })
    }
}

fn check_weights(index: usize, layer: &LayerShape, w: &LayerWeights) -> Result<()> {
    if w.weight.shape() != layer.weight_shape().as_slice() {
        return Err(MimeError::Shape {
            layer: index,
            expected: layer.weight_shape(),
            actual: w.weight.shape().to_vec(),
        });
    }
    if let Some(b) = &w.bias {
        if b.len() != layer.c_out {
            return Err(MimeError::Shape {
                layer: index,
                expected: vec![layer.c_out],
                actual: b.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Pre-activation output `Y` of one layer; no nonlinearity.
pub fn layer_forward(
    index: usize,
    layer: &LayerShape,
    weights: &LayerWeights,
    input: &Tensor,
) -> Result<Tensor> {
    check_input(index, layer, input)?;
    check_weights(index, layer, weights)?;
    let w = weights.weight.data();
    let x = input.data();
    let bias = weights.bias.as_ref().map(|b| b.data());
    let out = match layer.kind {
        LayerKind::Fc => {
            let n = layer.c_in;
            (0..layer.c_out)
                .map(|o| {
                    let row = &w[o * n..(o + 1) * n];
                    let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                    dot + bias.map_or(0.0, |b| b[o])
                })
                .collect()
        }
        LayerKind::Conv => conv_forward(layer, w, bias, x),
    };
    Ok(Tensor::new(layer.output_shape(), out).expect("output shape from layer"))
}

fn conv_forward(layer: &LayerShape, w: &[f64], bias: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
    let (h_out, w_out) = (layer.h_out(), layer.w_out());
    let (hi, wi) = (layer.h_in as isize, layer.w_in as isize);
    let (kh, kw) = (layer.k_h, layer.k_w);
    let mut out = vec![0.0; layer.c_out * h_out * w_out];
    for co in 0..layer.c_out {
        let b = bias.map_or(0.0, |b| b[co]);
        for oh in 0..h_out {
            for ow in 0..w_out {
                let mut acc = b;
                let base_h = (oh * layer.stride) as isize - layer.pad as isize;
                let base_w = (ow * layer.stride) as isize - layer.pad as isize;
                for ci in 0..layer.c_in {
                    let wbase = (co * layer.c_in + ci) * kh * kw;
                    let xbase = ci * layer.h_in * layer.w_in;
                    for dh in 0..kh {
                        let ih = base_h + dh as isize;
                        if ih < 0 || ih >= hi {
                            continue;
                        }
                        for dw in 0..kw {
                            let iw = base_w + dw as isize;
                            if iw < 0 || iw >= wi {
                                continue;
                            }
                            acc += w[wbase + dh * kw + dw]
                                * x[xbase + ih as usize * layer.w_in + iw as usize];
                        }
                    }
                }
                out[(co * h_out + oh) * w_out + ow] = acc;
            }
        }
    }
    out
}

/// Gradients of one layer given `dL/dY`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input: Tensor,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

/// Backward pass through one layer. `want_weight_grad = false` skips the
/// weight/bias gradients (frozen layers).
pub fn layer_backward(
    index: usize,
    layer: &LayerShape,
    weights: &LayerWeights,
    input: &Tensor,
    grad_out: &Tensor,
    want_weight_grad: bool,
) -> Result<LayerGrads> {
    check_input(index, layer, input)?;
    check_weights(index, layer, weights)?;
    if grad_out.len() != layer.n_outputs() {
        return Err(MimeError::Shape {
            layer: index,
            expected: layer.output_shape(),
            actual: grad_out.shape().to_vec(),
        });
    }
    let w = weights.weight.data();
    let x = input.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = want_weight_grad.then(|| vec![0.0; w.len()]);
    match layer.kind {
        LayerKind::Fc => {
            let n = layer.c_in;
            for (o, &g) in go.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &w[o * n..(o + 1) * n];
                for (gxi, wi) in gx.iter_mut().zip(row) {
                    *gxi += g * wi;
                }
                if let Some(gw) = gw.as_mut() {
                    for (gwi, xi) in gw[o * n..(o + 1) * n].iter_mut().zip(x) {
                        *gwi += g * xi;
                    }
                }
            }
        }
        LayerKind::Conv => conv_backward(layer, w, x, go, &mut gx, gw.as_deref_mut()),
    }
    let bias = (want_weight_grad && weights.bias.is_some()).then(|| {
        let per = layer.h_out() * layer.w_out();
        let gb = (0..layer.c_out)
            .map(|c| go[c * per..(c + 1) * per].iter().sum())
            .collect();
        Tensor::new(vec![layer.c_out], gb).expect("bias shape")
    });
    Ok(LayerGrads {
        input: Tensor::new(input.shape().to_vec(), gx).expect("input shape"),
        weight: gw.map(|g| Tensor::new(layer.weight_shape(), g).expect("weight shape")),
        bias,
    })
}

fn conv_backward(
    layer: &LayerShape,
    w: &[f64],
    x: &[f64],
    go: &[f64],
    gx: &mut [f64],
    mut gw: Option<&mut [f64]>,
) {
    let (h_out, w_out) = (layer.h_out(), layer.w_out());
    let (hi, wi) = (layer.h_in as isize, layer.w_in as isize);
    let (kh, kw) = (layer.k_h, layer.k_w);
    for co in 0..layer.c_out {
        for oh in 0..h_out {
            for ow in 0..w_out {
                let g = go[(co * h_out + oh) * w_out + ow];
                if g == 0.0 {
                    continue;
                }
                let base_h = (oh * layer.stride) as isize - layer.pad as isize;
                let base_w = (ow * layer.stride) as isize - layer.pad as isize;
                for ci in 0..layer.c_in {
                    let wbase = (co * layer.c_in + ci) * kh * kw;
                    let xbase = ci * layer.h_in * layer.w_in;
                    for dh in 0..kh {
                        let ih = base_h + dh as isize;
                        if ih < 0 || ih >= hi {
                            continue;
                        }
                        for dw in 0..kw {
                            let iw = base_w + dw as isize;
                            if iw < 0 || iw >= wi {
                                continue;
                            }
                            let xi = xbase + ih as usize * layer.w_in + iw as usize;
                            let wk = wbase + dh * kw + dw;
                            gx[xi] += g * w[wk];
                            if let Some(gw) = gw.as_deref_mut() {
                                gw[wk] += g * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Everything a plain-ReLU forward pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluTrace {
    pub logits: Tensor,
    /// Pre-activations of every layer, classifier included.
    pub pre_activations: Vec<Tensor>,
    /// Post-ReLU activations of the hidden layers.
    pub activations: Vec<Tensor>,
}

/// Hidden layers apply `max(0, y)`; the classifier emits raw logits.
pub fn relu_forward(spec: &NetworkSpec, weights: &Weights, input: &Tensor) -> Result<ReluTrace> {
    if weights.layers.len() != spec.layers.len() {
        return Err(MimeError::InvalidSpec(format!(
            "{} weight sets for {} layers",
            weights.layers.len(),
            spec.layers.len()
        )));
    }
    let n_hidden = spec.layers.len() - 1;
    let mut pre_activations = Vec::with_capacity(spec.layers.len());
    let mut activations = Vec::with_capacity(n_hidden);
    let mut x = input.clone();
    for (i, (layer, w)) in spec.layers.iter().zip(&weights.layers).enumerate() {
        let y = layer_forward(i, layer, w, &x)?;
        if !y.all_finite() {
            return Err(MimeError::NonFinite { layer: i });
        }
        if i < n_hidden {
            let a = y.map(|v| v.max(0.0));
            activations.push(a.clone());
            x = a;
        }
        pre_activations.push(y);
    }
    Ok(ReluTrace {
        logits: pre_activations.last().expect("non-empty").clone(),
        pre_activations,
        activations,
    })
}
