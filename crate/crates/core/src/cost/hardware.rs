use serde::{Deserialize, Serialize};

use crate::error::{MimeError, Result};

pub const KB: u64 = 1024;

/// How weights that do not fit the weight cache are re-fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightReuse {
    /// Weights are split into cache-sized output-channel tiles. Each tile is
    /// fetched once per residency episode and serves every image in it.
    #[default]
    TiledBatch,
    /// The part of the weights that does not fit the cache is re-read from
    /// DRAM on every pass.
    PerPassStreaming,
}

/// How weight-pruned baselines store and move their weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightEncoding {
    /// Zero weights are stored and moved like any other; only MACs skip them.
    #[default]
    Dense,
    /// Only nonzero weights are stored and moved; index overhead ignored.
    Compressed,
}

/// Systolic-array constants. Energies are per word access or per op,
/// normalised to one MAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareConfig {
    pub pe_count: u64,
    pub cache_bytes_activation: u64,
    pub cache_bytes_weight: u64,
    pub cache_bytes_threshold: u64,
    pub spad_bytes: u64,
    pub bytes_per_word: u64,
    pub e_dram: f64,
    pub e_cache: f64,
    pub e_reg: f64,
    pub e_mac: f64,
    pub weight_reuse: WeightReuse,
    pub weight_encoding: WeightEncoding,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            pe_count: 1024,
            cache_bytes_activation: 156 * KB,
            cache_bytes_weight: 156 * KB,
            cache_bytes_threshold: 156 * KB,
            spad_bytes: 512,
            bytes_per_word: 2,
            e_dram: 200.0,
            e_cache: 6.0,
            e_reg: 2.0,
            e_mac: 1.0,
            weight_reuse: WeightReuse::TiledBatch,
            weight_encoding: WeightEncoding::Dense,
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        let ints = [
            ("pe_count", self.pe_count),
            ("cache_bytes_activation", self.cache_bytes_activation),
            ("cache_bytes_weight", self.cache_bytes_weight),
            ("cache_bytes_threshold", self.cache_bytes_threshold),
            ("spad_bytes", self.spad_bytes),
            ("bytes_per_word", self.bytes_per_word),
        ];
        if let Some((name, _)) = ints.iter().find(|(_, v)| *v == 0) {
            return Err(MimeError::InvalidHardware(format!("{name} must be > 0")));
        }
        if self.cache_bytes_weight < self.bytes_per_word {
            return Err(MimeError::InvalidHardware("weight cache holds no words".into()));
        }
        let e = [self.e_dram, self.e_cache, self.e_reg, self.e_mac];
        if e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(MimeError::InvalidHardware("energies must be finite and > 0".into()));
        }
        if !(self.e_dram > self.e_cache && self.e_cache > self.e_reg && self.e_reg >= self.e_mac) {
            return Err(MimeError::InvalidHardware(
                "energies must satisfy e_dram > e_cache > e_reg >= e_mac".into(),
            ));
        }
        Ok(())
    }

    /// Sets all three caches to `kb` KiB.
    pub fn with_cache_kb(mut self, kb: u64) -> Self {
        self.cache_bytes_activation = kb * KB;
        self.cache_bytes_weight = kb * KB;
        self.cache_bytes_threshold = kb * KB;
        self
    }

    pub fn with_pe(mut self, pe: u64) -> Self {
        self.pe_count = pe;
        self
    }

    pub fn weight_cache_words(&self) -> u64 {
        self.cache_bytes_weight / self.bytes_per_word
    }

    /// Weight cache size in KiB, as reported in ablation tables.
    pub fn cache_kb(&self) -> f64 {
        self.cache_bytes_weight as f64 / KB as f64
    }
}
