use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{MimeError, Result};
use crate::mask::ThresholdSet;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for a list of parameter blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(block_sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = block_sizes.into_iter().collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_thresholds(t: &ThresholdSet) -> Self {
        AdamState::new(t.layers.iter().map(Tensor::len))
    }

    /// One bias-corrected update of every block.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(MimeError::InvalidArgument(format!(
                "Adam state has {} blocks, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(MimeError::InvalidArgument(format!(
                    "Adam block {i} holds {} values, got {} params and {} grads",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Adam on the thresholds followed by the `t >= floor` clamp.
pub fn adam_step(
    thresholds: &mut ThresholdSet,
    gradients: &[Tensor],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if gradients.len() != thresholds.layers.len()
        || gradients.iter().zip(&thresholds.layers).any(|(g, t)| g.shape() != t.shape())
    {
        return Err(MimeError::ThresholdMismatch(
            "gradient tensors do not match threshold tensors".into(),
        ));
    }
    {
        let mut params: Vec<&mut [f64]> = thresholds.layers.iter_mut().map(|t| t.data_mut()).collect();
        let grads: Vec<&[f64]> = gradients.iter().map(|g| g.data()).collect();
        state.update(&mut params, &grads, config.learning_rate)?;
    }
    let floor = config.threshold_floor;
    for t in &mut thresholds.layers {
        for v in t.data_mut() {
            if v.is_nan() || *v < floor {
                *v = floor;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(v: f64) -> ThresholdSet {
        ThresholdSet {
            task_id: "t".into(),
            layers: vec![Tensor::from_vec(vec![v])],
        }
    }

    #[test]
    fn zero_gradient_leaves_thresholds() {
        let mut t = scalar_set(0.3);
        let mut s = AdamState::for_thresholds(&t);
        let cfg = TrainConfig::default();
        for _ in 0..5 {
            adam_step(&mut t, &[Tensor::from_vec(vec![0.0])], &mut s, &cfg).unwrap();
        }
        assert_eq!(t.layers[0].data()[0], 0.3);
    }

    #[test]
    fn first_step_closed_form() {
        // At step 1, mhat = g and vhat = g^2, so the update is lr * g / (|g| + eps).
        for g in [0.37, -2.5, 1e-3] {
            let mut t = scalar_set(1.0);
            let mut s = AdamState::for_thresholds(&t);
            let cfg = TrainConfig::default();
            adam_step(&mut t, &[Tensor::from_vec(vec![g])], &mut s, &cfg).unwrap();
            let expect = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((t.layers[0].data()[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn clamp_to_floor() {
        let mut t = scalar_set(2e-4);
        let mut s = AdamState::for_thresholds(&t);
        let cfg = TrainConfig { learning_rate: 1.0, ..Default::default() };
        adam_step(&mut t, &[Tensor::from_vec(vec![5.0])], &mut s, &cfg).unwrap();
        assert_eq!(t.layers[0].data()[0], 1e-4);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut t = scalar_set(1.0);
        let mut s = AdamState::for_thresholds(&t);
        let bad = [Tensor::from_vec(vec![0.0, 0.0])];
        assert!(adam_step(&mut t, &bad, &mut s, &TrainConfig::default()).is_err());
    }
}
