//! Hardware-variant ablations and the weight-pruned baseline comparison.

use serde::{Deserialize, Serialize};

use super::hardware::HardwareConfig;
use super::schedule::{energy_schedule, CostOptions, ProfileSet, TaskSchedule};
use super::traffic::InferenceCase;
use crate::error::{MimeError, Result};
use crate::network::NetworkSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareVariant {
    pub name: String,
    pub hw: HardwareConfig,
}

/// Reference array (`A`), a quarter-size PE array (`B`) and 128 KiB caches (`C`).
pub fn standard_variants(base: &HardwareConfig) -> Vec<HardwareVariant> {
    vec![
        HardwareVariant { name: "A".into(), hw: *base },
        HardwareVariant { name: "B".into(), hw: base.with_pe(256) },
        HardwareVariant { name: "C".into(), hw: base.with_cache_kb(128) },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub layer: String,
    pub variant: String,
    pub pe_count: u64,
    pub cache_kb: f64,
    pub total: f64,
    pub ratio_vs_case_a: f64,
}

/// Per-layer totals of each variant, relative to the first variant.
pub fn ablation_compare(
    spec: &NetworkSpec,
    variants: &[HardwareVariant],
    case: InferenceCase,
    schedule: &TaskSchedule,
    profiles: &ProfileSet,
    opts: &CostOptions,
) -> Result<Vec<AblationRow>> {
    let reference = variants
        .first()
        .ok_or_else(|| MimeError::InvalidArgument("no hardware variants given".into()))?;
    let base = energy_schedule(spec, &reference.hw, case, schedule, profiles, opts)?;
    let mut rows = Vec::new();
    for v in variants {
        let reports = energy_schedule(spec, &v.hw, case, schedule, profiles, opts)?;
        for (r, b) in reports.iter().zip(&base) {
            rows.push(AblationRow {
                layer: r.layer.clone(),
                variant: v.name.clone(),
                pe_count: v.hw.pe_count,
                cache_kb: v.hw.cache_kb(),
                total: r.energy.total,
                ratio_vs_case_a: r.energy.total / b.energy.total,
            });
        }
    }
    let order = |layer: &str| spec.layer_index(layer).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| order(&a.layer).cmp(&order(&b.layer)).then_with(|| a.variant.cmp(&b.variant)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedRow {
    pub layer: String,
    pub n_weights: u64,
    pub n_thresholds: u64,
    pub mime_total: f64,
    pub pruned_total: f64,
    /// `pruned_total / mime_total`; above 1 means MIME uses less energy.
    pub ratio: f64,
}

/// MIME against a conventional weight-pruned baseline on the same schedule.
/// The baseline uses `relu_profiles` for activation sparsity.
pub fn pruned_compare(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    schedule: &TaskSchedule,
    mime_profiles: &ProfileSet,
    relu_profiles: &ProfileSet,
    weight_sparsity: f64,
    opts: &CostOptions,
) -> Result<Vec<PrunedRow>> {
    let mime = energy_schedule(spec, hw, InferenceCase::Mime, schedule, mime_profiles, opts)?;
    let pruned = energy_schedule(
        spec,
        hw,
        InferenceCase::PrunedBaseline { weight_sparsity },
        schedule,
        relu_profiles,
        opts,
    )?;
    Ok(opts
        .select(spec)?
        .into_iter()
        .map(|i| &spec.layers[i])
        .zip(mime.iter().zip(&pruned))
        .map(|(l, (m, p))| PrunedRow {
            layer: l.name.clone(),
            n_weights: l.n_weights() as u64,
            n_thresholds: l.n_outputs() as u64,
            mime_total: m.energy.total,
            pruned_total: p.energy.total,
            ratio: p.energy.total / m.energy.total,
        })
        .collect())
}
