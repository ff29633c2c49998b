//! Experiment configuration: one JSON document shared by every command,
//! with command-line overrides applied on top.

use std::path::{Path, PathBuf};

use mime_core::arch::ThresholdScope;
use mime_core::cost::{HardwareConfig, InferenceCase, SparsityAlignment, TaskMode, TaskSchedule};
use mime_core::trainer::TrainConfig;
use mime_core::{LayerShape, NetworkSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fixtures::{self, FIXTURE_TASKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub hardware: HardwareConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_cases")]
    pub cases: Vec<CaseName>,
    #[serde(default)]
    pub sparsity: SparsityConfig,
    /// Hidden layers to report. Defaults to the tabulated layers for fixture
    /// sparsity and to every hidden layer otherwise.
    #[serde(default)]
    pub layers: Option<Vec<String>>,
    /// Fill untabulated fixture layers from the nearest tabulated layer.
    #[serde(default)]
    pub interpolate: bool,
    /// Defaults to `self_aligned` for fixtures and `chained` for measured profiles.
    #[serde(default)]
    pub alignment: Option<SparsityAlignment>,
    #[serde(default)]
    pub trainer: TrainConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub storage: StorageSection,
    #[serde(default)]
    pub ablation: AblationSection,
    #[serde(default)]
    pub measure: Option<MeasureSection>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn default_cases() -> Vec<CaseName> {
    vec![CaseName::Case1, CaseName::Case2, CaseName::Case3]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// At most one of `fixture`, `layers` or `footprint`; none selects the
/// command's default fixture (`vgg16-cifar` for cost commands, `desk-cnn`
/// for training).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub layers: Option<Vec<LayerShape>>,
    #[serde(default)]
    pub classes: Option<usize>,
    /// Raw word counts; only meaningful for `storage`.
    #[serde(default)]
    pub footprint: Option<FootprintConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootprintConfig {
    pub weights: u64,
    pub thresholds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Unset means the command default (`energy` runs both modes).
    #[serde(default)]
    pub mode: Option<TaskMode>,
    #[serde(default = "default_singular_task")]
    pub singular_task: String,
    #[serde(default = "default_images")]
    pub images: usize,
    #[serde(default = "default_pipelined_tasks")]
    pub pipelined_tasks: Vec<String>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            mode: None,
            singular_task: default_singular_task(),
            images: default_images(),
            pipelined_tasks: default_pipelined_tasks(),
        }
    }
}

fn default_singular_task() -> String {
    FIXTURE_TASKS[0].to_string()
}

fn default_images() -> usize {
    3
}

fn default_pipelined_tasks() -> Vec<String> {
    FIXTURE_TASKS.iter().map(|t| t.to_string()).collect()
}

impl ScheduleConfig {
    pub fn build(&self, mode: TaskMode) -> TaskSchedule {
        match mode {
            TaskMode::Singular => TaskSchedule::singular(&self.singular_task, self.images),
            TaskMode::Pipelined => TaskSchedule::pipelined(&self.pipelined_tasks),
        }
    }

    pub fn tasks(&self, mode: TaskMode) -> Vec<String> {
        let mut t = self.build(mode).slots;
        t.sort();
        t.dedup();
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseName {
    Case1,
    Case2,
    Case3,
    Pruned,
}

impl CaseName {
    pub fn to_case(self, weight_sparsity: f64) -> InferenceCase {
        match self {
            CaseName::Case1 => InferenceCase::DenseBaseline,
            CaseName::Case2 => InferenceCase::ZeroSkipBaseline,
            CaseName::Case3 => InferenceCase::Mime,
            CaseName::Pruned => InferenceCase::PrunedBaseline { weight_sparsity },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsitySourceKind {
    #[default]
    Fixture,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityConfig {
    #[serde(default)]
    pub source: SparsitySourceKind,
    /// Measured MIME profiles (`profiles_mime.json` from `train`).
    #[serde(default)]
    pub mime: Option<PathBuf>,
    /// Measured ReLU profiles (`profiles_relu.json` from `train`).
    #[serde(default)]
    pub relu: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_parent_epochs")]
    pub parent_epochs: usize,
    /// Child tasks of the synthetic generator; ignored for IDX data.
    #[serde(default = "default_child_tasks")]
    pub tasks: Vec<String>,
}

impl Default for TrainSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

fn default_n_train() -> usize {
    8000
}

fn default_n_test() -> usize {
    1000
}

fn default_parent_epochs() -> usize {
    20
}

fn default_child_tasks() -> Vec<String> {
    vec!["child_binary".into(), "child_ternary".into()]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    #[default]
    Synthetic,
    Idx {
        parent: IdxTask,
        children: Vec<IdxTask>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxTask {
    pub name: String,
    pub classes: usize,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSection {
    #[serde(default = "default_max_children")]
    pub max_children: u64,
    #[serde(default)]
    pub head_bytes: u64,
    #[serde(default)]
    pub threshold_scope: ThresholdScope,
}

impl Default for StorageSection {
    fn default() -> Self {
        StorageSection {
            max_children: default_max_children(),
            head_bytes: 0,
            threshold_scope: ThresholdScope::default(),
        }
    }
}

fn default_max_children() -> u64 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    #[serde(default = "default_weight_sparsity")]
    pub weight_sparsity: f64,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            weight_sparsity: default_weight_sparsity(),
        }
    }
}

fn default_weight_sparsity() -> f64 {
    0.9
}

/// Input of the `sparsity` command when measuring a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub checkpoint: PathBuf,
    pub task: String,
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub pe: Option<u64>,
    pub cache_kb: Option<u64>,
    pub mode: Option<TaskMode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub interpolate: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(pe) = o.pe {
            self.hardware = self.hardware.with_pe(pe);
        }
        if let Some(kb) = o.cache_kb {
            self.hardware = self.hardware.with_cache_kb(kb);
        }
        if let Some(mode) = o.mode {
            self.schedule.mode = Some(mode);
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        self.interpolate |= o.interpolate;
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        let n = &self.network;
        let given = [n.fixture.is_some(), n.layers.is_some(), n.footprint.is_some()];
        if given.iter().filter(|g| **g).count() > 1 {
            return Err(CliError::config("network takes only one of `fixture`, `layers`, `footprint`"));
        }
        if n.classes.is_some() && n.layers.is_none() {
            return Err(CliError::config("network.classes only applies to explicit `layers`"));
        }
        if let Some(f) = &n.fixture {
            if fixtures::network_fixture(f).is_none() {
                return Err(CliError::config(format!(
                    "unknown network fixture `{f}` (known: {}, {})",
                    fixtures::VGG16_CIFAR,
                    fixtures::DESK_CNN
                )));
            }
        }
        if let Some(f) = n.footprint {
            if f.weights == 0 {
                return Err(CliError::config("network.footprint.weights must be >= 1"));
            }
        }
        self.hardware.validate()?;
        if self.schedule.images == 0 {
            return Err(CliError::config("schedule.images must be >= 1"));
        }
        if self.schedule.pipelined_tasks.is_empty() {
            return Err(CliError::config("schedule.pipelined_tasks must not be empty"));
        }
        if self.cases.is_empty() {
            return Err(CliError::config("cases must not be empty"));
        }
        let ws = self.ablation.weight_sparsity;
        if !(0.0..1.0).contains(&ws) {
            return Err(CliError::config(format!("ablation.weight_sparsity must be in [0, 1), got {ws}")));
        }
        if self.sparsity.source == SparsitySourceKind::Measured && self.interpolate {
            return Err(CliError::config("--interpolate only applies to fixture sparsity"));
        }
        if self.storage.max_children == 0 {
            return Err(CliError::config("storage.max_children must be >= 1"));
        }
        self.trainer.validate()?;
        if self.train.n_train == 0 || self.train.n_test == 0 {
            return Err(CliError::config("train.n_train and train.n_test must be >= 1"));
        }
        Ok(())
    }

    /// The configured network, or the fixture `default_fixture`.
    pub fn network_spec(&self, default_fixture: &str) -> CliResult<NetworkSpec> {
        let n = &self.network;
        if n.footprint.is_none() && n.layers.is_none() {
            let f = n.fixture.as_deref().unwrap_or(default_fixture);
            return fixtures::network_fixture(f).ok_or_else(|| CliError::config(format!("unknown network fixture `{f}`")));
        }
        if let Some(layers) = &n.layers {
            let classes = match n.classes {
                Some(c) => c,
                None => layers.last().map(|l| l.c_out).unwrap_or(0),
            };
            return Ok(NetworkSpec::new(layers.clone(), classes)?);
        }
        Err(CliError::config("this command needs a layer-level network (`fixture` or `layers`)"))
    }

    pub fn uses_fixture_sparsity(&self) -> bool {
        self.sparsity.source == SparsitySourceKind::Fixture
    }

    pub fn effective_alignment(&self) -> SparsityAlignment {
        self.alignment.unwrap_or(match self.sparsity.source {
            SparsitySourceKind::Fixture => SparsityAlignment::SelfAligned,
            SparsitySourceKind::Measured => SparsityAlignment::Chained,
        })
    }
}
