use serde::{Deserialize, Serialize};

use crate::error::{MimeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    Triangular,
}

/// Stand-in derivative for the threshold step `[u >= 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    #[serde(default = "triangular")]
    pub kind: SurrogateKind,
    #[serde(default = "unit_width")]
    pub width: f64,
}

fn triangular() -> SurrogateKind {
    SurrogateKind::Triangular
}

fn unit_width() -> f64 {
    1.0
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec {
            kind: SurrogateKind::Triangular,
            width: 1.0,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width.is_finite() && self.width > 0.0 {
            Ok(())
        } else {
            Err(MimeError::InvalidArgument(format!(
                "surrogate width must be finite and > 0, got {}",
                self.width
            )))
        }
    }
}

/// Triangular hat `g(u) = max(0, 1 - |u|/w) / w`, unit area.
pub fn surrogate_grad(u: f64, spec: &SurrogateSpec) -> f64 {
    let w = spec.width;
    (1.0 - u.abs() / w).max(0.0) / w
}

/// Antiderivative of [`surrogate_grad`] rising from 0 at `u = -w` to 1 at
/// `u = w`. Replacing the step by this ramp gives a differentiable network
/// whose exact gradients are the surrogate gradients.
pub fn ramp(u: f64, spec: &SurrogateSpec) -> f64 {
    let w = spec.width;
    if u <= -w {
        0.0
    } else if u <= 0.0 {
        (u + w) * (u + w) / (2.0 * w * w)
    } else if u < w {
        1.0 - (w - u) * (w - u) / (2.0 * w * w)
    } else {
        1.0
    }
}
