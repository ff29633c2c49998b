//! Sparsity profiles for the cost model: built-in fixtures or files
//! measured by `train`.

use std::collections::BTreeMap;
use std::path::Path;

use mime_core::cost::{CostOptions, ProfileSet};
use mime_core::mask::{SparsityProfile, SparsitySource};
use mime_core::{MimeError, NetworkSpec};

use crate::config::{ExperimentConfig, SparsitySourceKind};
use crate::error::{CliError, CliResult};
use crate::fixtures::{self, PUBLISHED_LAYERS};

/// A JSON object mapping task id to profile. Every entry must name its own key.
pub fn parse_profile_set(text: &str, expected: SparsitySource) -> Result<ProfileSet, MimeError> {
    let set: BTreeMap<String, SparsityProfile> =
        serde_json::from_str(text).map_err(|e| MimeError::Parse(e.to_string()))?;
    if set.is_empty() {
        return Err(MimeError::Parse("profile set is empty".into()));
    }
    for (task, p) in &set {
        p.validate()?;
        if &p.task_id != task {
            return Err(MimeError::Parse(format!("profile keyed `{task}` has task_id `{}`", p.task_id)));
        }
        if p.source != expected {
            return Err(MimeError::Parse(format!("profile `{task}` has source {:?}, expected {expected:?}", p.source)));
        }
    }
    Ok(set)
}

pub fn profile_set_json(set: &ProfileSet) -> String {
    let mut s = serde_json::to_string_pretty(set).expect("serializable");
    s.push('\n');
    s
}

fn load_measured(path: Option<&Path>, source: SparsitySource) -> CliResult<ProfileSet> {
    let name = match source {
        SparsitySource::Mime => "mime",
        SparsitySource::Relu => "relu",
    };
    let path = path.ok_or_else(|| CliError::config(format!("measured sparsity needs `sparsity.{name}`")))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    parse_profile_set(&text, source).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// MIME and ReLU profiles for the configured source.
pub fn load(config: &ExperimentConfig, spec: &NetworkSpec) -> CliResult<(ProfileSet, ProfileSet)> {
    match config.sparsity.source {
        SparsitySourceKind::Fixture => {
            let fill = config.interpolate.then_some(spec);
            Ok((
                fixtures::fixture_profiles(SparsitySource::Mime, fill)?,
                fixtures::fixture_profiles(SparsitySource::Relu, fill)?,
            ))
        }
        SparsitySourceKind::Measured => Ok((
            load_measured(config.sparsity.mime.as_deref(), SparsitySource::Mime)?,
            load_measured(config.sparsity.relu.as_deref(), SparsitySource::Relu)?,
        )),
    }
}

/// Layer selection and alignment for the cost model.
pub fn cost_options(config: &ExperimentConfig, spec: &NetworkSpec) -> CostOptions {
    let layers = match &config.layers {
        Some(l) => Some(l.clone()),
        None if config.uses_fixture_sparsity() && !config.interpolate => Some(
            PUBLISHED_LAYERS
                .iter()
                .filter(|l| spec.layer_index(l).is_some())
                .map(|l| l.to_string())
                .collect(),
        ),
        None => None,
    };
    CostOptions {
        alignment: config.effective_alignment(),
        layers,
    }
}
