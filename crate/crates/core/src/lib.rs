//! Multi-task inference with a frozen parent network and per-task learned
//! activation thresholds, plus storage and energy accounting for a
//! systolic-array accelerator.

pub mod arch;
pub mod cost;
pub mod error;
pub mod forward;
pub mod mask;
pub mod network;
pub mod tensor;
pub mod trainer;

pub use error::{MimeError, Result};
pub use mask::{
    apply_mask, masked_forward, measure_sparsity, LayerSparsity, MaskedForwardTrace, SparsityMode,
    SparsityProfile, SparsitySource, ThresholdSet,
};
pub use network::{count_params, init_network, LayerCounts, LayerKind, LayerShape, NetworkSpec, Weights};
pub use tensor::Tensor;
