//! Per-layer word counts and their energy.

use serde::{Deserialize, Serialize};

use super::hardware::{HardwareConfig, WeightEncoding, WeightReuse};
use crate::error::{MimeError, Result};
use crate::network::LayerShape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum InferenceCase {
    /// Structural zeros are processed like any other value.
    DenseBaseline,
    /// Zero activations skip compute and movement.
    ZeroSkipBaseline,
    /// Zero-skipping plus per-neuron thresholds.
    Mime,
    /// Zero-skipping with a fraction of weights pruned to zero.
    PrunedBaseline { weight_sparsity: f64 },
}

impl InferenceCase {
    pub fn label(&self) -> String {
        match self {
            InferenceCase::DenseBaseline => "case1".into(),
            InferenceCase::ZeroSkipBaseline => "case2".into(),
            InferenceCase::Mime => "case3".into(),
            InferenceCase::PrunedBaseline { weight_sparsity } => format!("pruned{weight_sparsity}"),
        }
    }

    pub fn weight_sparsity(&self) -> f64 {
        match self {
            InferenceCase::PrunedBaseline { weight_sparsity } => *weight_sparsity,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weight_sparsity();
        if (0.0..1.0).contains(&w) {
            Ok(())
        } else {
            Err(MimeError::InvalidArgument(format!("weight_sparsity must be in [0, 1), got {w}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Residency {
    /// Weights must be brought in from DRAM.
    Cold,
    /// Weights are already on chip from an earlier episode.
    Warm,
}

/// Words moved at each level plus op counts. Sparse counts are expected
/// values, so they are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerTraffic {
    pub dram_w: f64,
    pub dram_t: f64,
    pub dram_act_in: f64,
    pub dram_act_out: f64,
    pub cache_w: f64,
    pub cache_t: f64,
    pub cache_act: f64,
    pub reg_accesses: f64,
    pub macs: f64,
    pub cmp_ops: f64,
}

impl LayerTraffic {
    pub fn dram_words(&self) -> f64 {
        self.dram_w + self.dram_t + self.dram_act_in + self.dram_act_out
    }

    pub fn cache_words(&self) -> f64 {
        self.cache_w + self.cache_t + self.cache_act
    }

    pub fn add(&mut self, o: &LayerTraffic) {
        self.dram_w += o.dram_w;
        self.dram_t += o.dram_t;
        self.dram_act_in += o.dram_act_in;
        self.dram_act_out += o.dram_act_out;
        self.cache_w += o.cache_w;
        self.cache_t += o.cache_t;
        self.cache_act += o.cache_act;
        self.reg_accesses += o.reg_accesses;
        self.macs += o.macs;
        self.cmp_ops += o.cmp_ops;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    #[serde(rename = "E_DRAM")]
    pub e_dram: f64,
    #[serde(rename = "E_cache")]
    pub e_cache: f64,
    #[serde(rename = "E_reg")]
    pub e_reg: f64,
    #[serde(rename = "E_MAC")]
    pub e_mac: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(e_dram: f64, e_cache: f64, e_reg: f64, e_mac: f64) -> Self {
        EnergyBreakdown {
            e_dram,
            e_cache,
            e_reg,
            e_mac,
            total: e_dram + e_cache + e_reg + e_mac,
        }
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Output-stationary passes: output channels map across the array first and
/// the remaining PEs cover extra spatial positions.
pub fn passes(layer: &LayerShape, hw: &HardwareConfig, images: u64) -> u64 {
    let c_out = layer.c_out as u64;
    let hw_out = (layer.h_out() * layer.w_out()) as u64;
    let positions_per_pass = (hw.pe_count / c_out.min(hw.pe_count)).max(1);
    let channel_groups = ceil_div(c_out, hw.pe_count);
    channel_groups * ceil_div(hw_out, positions_per_pass) * images
}

fn spatial_tiles(layer: &LayerShape, hw: &HardwareConfig) -> u64 {
    let c_out = layer.c_out as u64;
    let positions_per_pass = (hw.pe_count / c_out.min(hw.pe_count)).max(1);
    ceil_div((layer.h_out() * layer.w_out()) as u64, positions_per_pass)
}

/// Output-channel tiles needed to hold `n_w` weights in the weight cache.
fn weight_tiles(layer: &LayerShape, hw: &HardwareConfig, n_w: f64) -> u64 {
    let c_out = layer.c_out as u64;
    let per_channel = n_w / c_out as f64;
    let fit = (hw.weight_cache_words() as f64 / per_channel).floor();
    let per_tile = if fit.is_finite() { (fit as u64).clamp(1, c_out) } else { c_out };
    ceil_div(c_out, per_tile)
}

/// Inputs of one `layer_traffic` query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficQuery {
    pub case: InferenceCase,
    pub sparsity_in: f64,
    pub sparsity_out: f64,
    pub residency: Residency,
    pub threshold_needed: bool,
    /// Images processed back to back in this residency episode.
    pub images: u64,
}

/// Word and op counts for one residency episode of one layer.
pub fn layer_traffic(layer: &LayerShape, hw: &HardwareConfig, q: &TrafficQuery) -> Result<LayerTraffic> {
    hw.validate()?;
    q.case.validate()?;
    if q.threshold_needed && q.case != InferenceCase::Mime {
        return Err(MimeError::InconsistentFlags(format!(
            "threshold_needed is only valid for MIME inference, got {}",
            q.case.label()
        )));
    }
    for s in [q.sparsity_in, q.sparsity_out] {
        if !(0.0..=1.0).contains(&s) {
            return Err(MimeError::InvalidArgument(format!("sparsity must be in [0, 1], got {s}")));
        }
    }
    let k = q.images as f64;
    let (s_in, s_out) = match q.case {
        InferenceCase::DenseBaseline => (0.0, 0.0),
        _ => (q.sparsity_in, q.sparsity_out),
    };
    let wsp = q.case.weight_sparsity();
    let n_w_dense = layer.n_weights() as f64;
    let n_w = match hw.weight_encoding {
        WeightEncoding::Compressed => n_w_dense * (1.0 - wsp),
        WeightEncoding::Dense => n_w_dense,
    };
    let n_in = layer.n_inputs() as f64;
    let n_out = layer.n_outputs() as f64;
    let kk = (layer.k_h * layer.k_w) as f64;
    let dense_macs = n_out * (layer.c_in as f64) * kk;
    let cold = q.residency == Residency::Cold;

    let (dram_w, tiles) = match hw.weight_reuse {
        WeightReuse::TiledBatch => (if cold { n_w } else { 0.0 }, weight_tiles(layer, hw, n_w)),
        WeightReuse::PerPassStreaming => {
            let p = passes(layer, hw, q.images) as f64;
            let resident = n_w.min(hw.weight_cache_words() as f64);
            let remainder = (n_w - resident).max(0.0);
            let words = if cold { n_w + (p - 1.0) * remainder } else { p * remainder };
            (words, 1)
        }
    };
    let nz_in = n_in * (1.0 - s_in);
    let nz_out = n_out * (1.0 - s_out);
    let thr = if q.threshold_needed { n_out * k } else { 0.0 };
    let episode_in_bytes = nz_in * k * hw.bytes_per_word as f64;
    let spill = (episode_in_bytes / hw.cache_bytes_activation as f64).ceil().max(1.0).min(tiles as f64);
    let macs = dense_macs * (1.0 - s_in) * (1.0 - wsp) * k;
    Ok(LayerTraffic {
        dram_w,
        dram_t: thr,
        dram_act_in: k * nz_in * spill,
        dram_act_out: k * nz_out,
        cache_w: n_w * spatial_tiles(layer, hw) as f64 * k,
        cache_t: thr,
        cache_act: k * nz_in * kk * tiles as f64,
        reg_accesses: 3.0 * macs + 2.0 * thr,
        macs,
        cmp_ops: thr,
    })
}

pub fn energy_layer(t: &LayerTraffic, hw: &HardwareConfig) -> EnergyBreakdown {
    EnergyBreakdown::new(
        hw.e_dram * t.dram_words(),
        hw.e_cache * t.cache_words(),
        hw.e_reg * t.reg_accesses,
        hw.e_mac * (t.macs + t.cmp_ops),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(case: InferenceCase, s: f64, cold: bool, thr: bool, images: u64) -> TrafficQuery {
        TrafficQuery {
            case,
            sparsity_in: s,
            sparsity_out: s,
            residency: if cold { Residency::Cold } else { Residency::Warm },
            threshold_needed: thr,
            images,
        }
    }

    #[test]
    fn pass_counts() {
        let hw = HardwareConfig::default();
        let toy = LayerShape::conv("c", 2, 8, 8, 4, 3, 1, 1);
        assert_eq!(passes(&toy, &hw, 3), 3);
        let wide = LayerShape::conv("c", 512, 4, 4, 512, 3, 1, 1);
        assert_eq!(passes(&wide, &hw.with_pe(256), 1), 32);
        let small = LayerShape::conv("c", 1, 4, 4, 8, 1, 1, 0);
        assert_eq!(passes(&small, &hw, 5), 5);
    }

    #[test]
    fn toy_conv_hand_count() {
        let hw = HardwareConfig::default();
        let toy = LayerShape::conv("c", 2, 8, 8, 4, 3, 1, 1);
        let t = layer_traffic(&toy, &hw, &q(InferenceCase::DenseBaseline, 0.0, true, false, 1)).unwrap();
        assert_eq!(t.dram_w, 72.0);
        assert_eq!(t.cache_w, 72.0);
        assert_eq!(t.macs, 4608.0);
        assert_eq!(t.dram_act_in, 128.0);
        assert_eq!(t.dram_act_out, 256.0);
        assert_eq!(t.cache_act, 128.0 * 9.0);
        assert_eq!(t.reg_accesses, 3.0 * 4608.0);
    }

    #[test]
    fn dense_limit_of_unit_layer() {
        let hw = HardwareConfig::default();
        let l = LayerShape::conv("c", 1, 1, 1, 1, 1, 1, 0);
        let t = layer_traffic(&l, &hw, &q(InferenceCase::DenseBaseline, 0.7, true, false, 1)).unwrap();
        assert_eq!(t.macs, 1.0);
    }

    #[test]
    fn per_pass_streaming_arithmetic() {
        let hw = HardwareConfig { weight_reuse: WeightReuse::PerPassStreaming, ..Default::default() };
        let l = LayerShape::conv("c", 256, 16, 12, 256, 3, 1, 1);
        assert_eq!(passes(&l, &hw, 1), 48);
        let t = layer_traffic(&l, &hw, &q(InferenceCase::ZeroSkipBaseline, 0.0, true, false, 1)).unwrap();
        assert_eq!(t.dram_w, 24_557_568.0);
    }

    #[test]
    fn thresholds_only_for_mime() {
        let hw = HardwareConfig::default();
        let l = LayerShape::conv("c", 2, 8, 8, 4, 3, 1, 1);
        for case in [InferenceCase::DenseBaseline, InferenceCase::ZeroSkipBaseline] {
            assert!(matches!(
                layer_traffic(&l, &hw, &q(case, 0.0, true, true, 1)),
                Err(MimeError::InconsistentFlags(_))
            ));
        }
        let t = layer_traffic(&l, &hw, &q(InferenceCase::Mime, 0.5, true, true, 2)).unwrap();
        assert_eq!((t.dram_t, t.cache_t, t.cmp_ops), (512.0, 512.0, 512.0));
    }

    #[test]
    fn energy_weights() {
        let hw = HardwareConfig::default();
        let e = energy_layer(&LayerTraffic::default(), &hw);
        assert_eq!(e, EnergyBreakdown::default());
        let e = energy_layer(&LayerTraffic { dram_w: 1.0, ..Default::default() }, &hw);
        assert_eq!(e.total, 200.0);
    }
}
