//! Multi-image schedules, residency episodes and per-layer reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hardware::HardwareConfig;
use super::traffic::{
    energy_layer, layer_traffic, passes, EnergyBreakdown, InferenceCase, LayerTraffic, Residency,
    TrafficQuery,
};
use crate::error::{MimeError, Result};
use crate::mask::SparsityProfile;
use crate::network::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Singular,
    Pipelined,
}

impl TaskMode {
    pub fn label(self) -> &'static str {
        match self {
            TaskMode::Singular => "singular",
            TaskMode::Pipelined => "pipelined",
        }
    }
}

/// The task of every image slot, in processing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub mode: TaskMode,
    pub slots: Vec<String>,
}

impl TaskSchedule {
    pub fn singular(task: &str, images: usize) -> Self {
        TaskSchedule {
            mode: TaskMode::Singular,
            slots: vec![task.to_string(); images],
        }
    }

    pub fn pipelined<S: AsRef<str>>(tasks: &[S]) -> Self {
        TaskSchedule {
            mode: TaskMode::Pipelined,
            slots: tasks.iter().map(|t| t.as_ref().to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(MimeError::InvalidArgument("schedule has no image slots".into()));
        }
        if self.mode == TaskMode::Singular && self.slots.iter().any(|t| t != &self.slots[0]) {
            return Err(MimeError::InvalidArgument(
                "a singular schedule must use one task for every slot".into(),
            ));
        }
        Ok(())
    }

    /// Maximal runs of consecutive slots sharing a task.
    pub fn episodes(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for t in &self.slots {
            match out.last_mut() {
                Some((last, n)) if last == t => *n += 1,
                _ => out.push((t.clone(), 1)),
            }
        }
        out
    }

    pub fn task_switches(&self) -> usize {
        self.episodes().len().saturating_sub(1)
    }
}

/// How a per-layer sparsity profile maps onto a layer's input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityAlignment {
    /// A layer's value is used for both its input and its output operands.
    #[default]
    SelfAligned,
    /// Input sparsity is the previous hidden layer's output sparsity (0 for
    /// the first layer).
    Chained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCostReport {
    pub layer: String,
    pub case: InferenceCase,
    pub pe_count: u64,
    pub traffic: LayerTraffic,
    pub energy: EnergyBreakdown,
    pub passes: u64,
    pub sparsity_in: f64,
    pub effective_macs: f64,
    pub dense_macs: f64,
    /// Dense over effective MAC count: throughput relative to dense inference.
    pub throughput_norm: f64,
}

pub type ProfileSet = BTreeMap<String, SparsityProfile>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostOptions {
    #[serde(default)]
    pub alignment: SparsityAlignment,
    /// Hidden layers to report, by name; all hidden layers when `None`.
    #[serde(default)]
    pub layers: Option<Vec<String>>,
}

impl CostOptions {
    pub fn aligned(alignment: SparsityAlignment) -> Self {
        CostOptions { alignment, layers: None }
    }

    /// Indices of the selected hidden layers, in network order.
    pub fn select(&self, spec: &NetworkSpec) -> Result<Vec<usize>> {
        let n_hidden = spec.hidden().len();
        match &self.layers {
            None => Ok((0..n_hidden).collect()),
            Some(names) => {
                let mut idx = names
                    .iter()
                    .map(|n| {
                        spec.layer_index(n).filter(|&i| i < n_hidden).ok_or_else(|| {
                            MimeError::InvalidArgument(format!("`{n}` is not a hidden layer of the network"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                idx.sort_unstable();
                idx.dedup();
                Ok(idx)
            }
        }
    }
}

fn lookup(
    profiles: &ProfileSet,
    task: &str,
    label: &str,
) -> Result<f64> {
    let p = profiles.get(task).ok_or_else(|| MimeError::MissingProfile {
        task: task.to_string(),
        detail: String::new(),
    })?;
    p.get(label).ok_or_else(|| MimeError::MissingProfile {
        task: task.to_string(),
        detail: format!(" (no value for layer `{label}`)"),
    })
}

fn layer_sparsity(
    spec: &NetworkSpec,
    index: usize,
    profiles: &ProfileSet,
    task: &str,
    alignment: SparsityAlignment,
) -> Result<(f64, f64)> {
    let name = &spec.layers[index].name;
    match alignment {
        SparsityAlignment::SelfAligned => {
            let s = lookup(profiles, task, name)?;
            Ok((s, s))
        }
        SparsityAlignment::Chained => {
            let s_out = lookup(profiles, task, name)?;
            let s_in = if index == 0 {
                0.0
            } else {
                lookup(profiles, task, &spec.layers[index - 1].name)?
            };
            Ok((s_in, s_out))
        }
    }
}

/// Traffic and energy of every hidden layer over the whole schedule.
///
/// Conventional cases load weights cold in every residency episode. MIME
/// loads them cold once and re-fetches only thresholds at task switches.
pub fn energy_schedule(
    spec: &NetworkSpec,
    hw: &HardwareConfig,
    case: InferenceCase,
    schedule: &TaskSchedule,
    profiles: &ProfileSet,
    opts: &CostOptions,
) -> Result<Vec<LayerCostReport>> {
    spec.validate()?;
    hw.validate()?;
    schedule.validate()?;
    let episodes = schedule.episodes();
    let total_images = schedule.slots.len() as u64;
    let alignment = opts.alignment;
    opts.select(spec)?
        .into_iter()
        .map(|i| {
            let layer = &spec.layers[i];
            let mut traffic = LayerTraffic::default();
            let mut weighted_s_in = 0.0;
            for (e, (task, images)) in episodes.iter().enumerate() {
                let (s_in, s_out) = if case == InferenceCase::DenseBaseline {
                    (0.0, 0.0)
                } else {
                    layer_sparsity(spec, i, profiles, task, alignment)?
                };
                let is_mime = case == InferenceCase::Mime;
                let residency = if !is_mime || e == 0 { Residency::Cold } else { Residency::Warm };
                let q = TrafficQuery {
                    case,
                    sparsity_in: s_in,
                    sparsity_out: s_out,
                    residency,
                    threshold_needed: is_mime,
                    images: *images,
                };
                traffic.add(&layer_traffic(layer, hw, &q)?);
                weighted_s_in += s_in * *images as f64;
            }
            let dense_macs = (layer.n_outputs() * layer.c_in * layer.k_h * layer.k_w) as f64
                * total_images as f64;
            Ok(LayerCostReport {
                layer: layer.name.clone(),
                case,
                pe_count: hw.pe_count,
                energy: energy_layer(&traffic, hw),
                passes: passes(layer, hw, total_images),
                sparsity_in: weighted_s_in / total_images as f64,
                effective_macs: traffic.macs,
                dense_macs,
                throughput_norm: dense_macs / traffic.macs,
                traffic,
            })
        })
        .collect()
}

/// Throughput of `report` relative to `baseline` under a PE-bound cycle
/// model, `cycles = effective_macs / pe_count`.
pub fn throughput_layer(report: &LayerCostReport, baseline: &LayerCostReport) -> Result<f64> {
    if report.layer != baseline.layer || report.dense_macs != baseline.dense_macs {
        return Err(MimeError::InvalidArgument(format!(
            "cannot compare layer `{}` against `{}`",
            report.layer, baseline.layer
        )));
    }
    let cycles = report.effective_macs / report.pe_count as f64;
    let base_cycles = baseline.effective_macs / baseline.pe_count as f64;
    Ok(base_cycles / cycles)
}
