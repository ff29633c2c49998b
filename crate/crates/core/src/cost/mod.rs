//! Analytical energy and throughput model of an output-stationary systolic
//! array with zero-skipping and an on-chip threshold cache.
//!
//! Counting rules, per layer and residency episode of `k` images:
//!
//! * passes per image: output channels are spread over the PEs first, spare
//!   PEs take extra output positions.
//! * weights are split into output-channel tiles that fit the weight cache
//!   (`WeightReuse::TiledBatch`); a cold episode fetches every tile once,
//!   a warm one fetches nothing. Every pass pulls its channels' weights from
//!   the cache into the scratchpads.
//! * nonzero inputs are read from the cache once per weight tile and serve
//!   `k_h * k_w` output positions; they come from DRAM once, or once per tile
//!   when the episode's inputs overflow the activation cache.
//! * every MAC costs three scratchpad accesses; a thresholded output adds a
//!   comparator op and two more accesses, and its threshold moves from DRAM
//!   through the cache once per image.
//! * partial sums never leave the PE.

pub mod compare;
pub mod hardware;
pub mod schedule;
pub mod traffic;

pub use compare::{ablation_compare, pruned_compare, standard_variants, AblationRow, HardwareVariant, PrunedRow};
pub use hardware::{HardwareConfig, WeightEncoding, WeightReuse, KB};
pub use schedule::{
    energy_schedule, throughput_layer, CostOptions, LayerCostReport, ProfileSet, SparsityAlignment, TaskMode,
    TaskSchedule,
};
pub use traffic::{
    energy_layer, layer_traffic, passes, EnergyBreakdown, InferenceCase, LayerTraffic, Residency,
    TrafficQuery,
};
