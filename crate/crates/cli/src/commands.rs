//! One function per subcommand. Each writes its CSV/JSON files into the
//! configured output directory and a `summary.json` with the resolved config.

use std::path::Path;

use mime_core::arch::{footprint, storage_plan, LayerFootprint, ModelFootprint};
use mime_core::cost::{
    ablation_compare, energy_schedule, pruned_compare, standard_variants, throughput_layer, InferenceCase,
    LayerCostReport, ProfileSet, TaskMode,
};
use mime_core::mask::{measure_sparsity, SparsityMode, SparsityProfile, SparsitySource};
use mime_core::trainer::{
    attach_head, evaluate, idx_dataset, synthetic_split, train_finetuned, train_parent, train_thresholds,
    Checkpoint, Dataset, EpochMetrics, Evaluation, SyntheticTask, TrainConfig,
};
use mime_core::{NetworkSpec, Weights};
use serde::Serialize;

use crate::config::{DatasetConfig, ExperimentConfig, IdxTask};
use crate::error::{CliError, CliResult};
use crate::fixtures::{self, DESK_CNN, PUBLISHED_LAYERS, VGG16_CIFAR};
use crate::output::{num, OutputDir};
use crate::profiles;

pub const STORAGE_HEADER: [&str; 5] = ["n_children", "conventional_bytes", "mime_bytes", "ratio", "exceeds_n_times"];
pub const FOOTPRINT_HEADER: [&str; 4] = ["layer", "n_weights", "n_thresholds", "n_macs_dense"];
pub const ENERGY_HEADER: [&str; 9] =
    ["mode", "layer", "case", "E_DRAM", "E_cache", "E_reg", "E_MAC", "total", "savings_vs_case1"];
pub const THROUGHPUT_HEADER: [&str; 7] =
    ["mode", "layer", "case", "sparsity_in", "effective_macs", "dense_macs", "throughput_norm"];
pub const ABLATION_HEADER: [&str; 6] = ["layer", "variant", "pe_count", "cache_kb", "total", "ratio_vs_case_a"];
pub const PRUNED_HEADER: [&str; 6] = ["layer", "n_weights", "n_thresholds", "mime_total", "pruned_total", "ratio"];
pub const METRICS_HEADER: [&str; 8] = ["task", "phase", "epoch", "loss", "ce", "lt", "accuracy", "mean_sparsity"];
pub const EVALUATION_HEADER: [&str; 6] =
    ["task", "finetuned_accuracy", "mime_accuracy", "accuracy_ratio", "finetuned_sparsity", "mime_sparsity"];
pub const SPARSITY_HEADER: [&str; 5] = ["source", "task", "layer", "sparsity", "published"];

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    files: &'a [String],
}

fn finish(command: &str, config: &ExperimentConfig, mut out: OutputDir) -> CliResult<OutputDir> {
    let mut files = out.written().to_vec();
    files.push("summary.json".into());
    out.json("summary.json", &Summary { command, config, files: &files })?;
    Ok(out)
}

fn bool_str(b: bool) -> String {
    b.to_string()
}

// ---------------------------------------------------------------- storage

pub fn storage(config: &ExperimentConfig) -> CliResult<OutputDir> {
    let mut fp = match config.network.footprint {
        Some(f) => ModelFootprint::from_layers(
            vec![LayerFootprint {
                name: "network".into(),
                n_weights: f.weights,
                n_thresholds: f.thresholds,
                n_output_neurons: f.thresholds,
                n_macs_dense: 0,
            }],
            config.hardware.bytes_per_word,
        ),
        None => footprint(&config.network_spec(VGG16_CIFAR)?, config.storage.threshold_scope)?,
    };
    fp.bytes_per_word = config.hardware.bytes_per_word;
    let rows = storage_rows(&fp, config.storage.max_children, config.storage.head_bytes)?;
    let layers: Vec<Vec<String>> = fp
        .layers
        .iter()
        .map(|l| vec![l.name.clone(), l.n_weights.to_string(), l.n_thresholds.to_string(), l.n_macs_dense.to_string()])
        .collect();
    let mut out = OutputDir::create(&config.output_dir)?;
    out.csv("storage.csv", &STORAGE_HEADER, &rows)?;
    out.csv("footprint.csv", &FOOTPRINT_HEADER, &layers)?;
    finish("storage", config, out)
}

pub fn storage_rows(fp: &ModelFootprint, max_children: u64, head_bytes: u64) -> CliResult<Vec<Vec<String>>> {
    (1..=max_children)
        .map(|n| {
            let p = storage_plan(fp, n, head_bytes)?;
            Ok(vec![
                n.to_string(),
                p.conventional_bytes.to_string(),
                p.mime_bytes.to_string(),
                num(p.ratio),
                bool_str(p.exceeds_n_times),
            ])
        })
        .collect()
}

// ---------------------------------------------------------------- cost

/// Everything the cost commands share.
pub struct CostSetup {
    pub spec: NetworkSpec,
    pub mime: ProfileSet,
    pub relu: ProfileSet,
    pub opts: mime_core::cost::CostOptions,
}

impl CostSetup {
    pub fn new(config: &ExperimentConfig) -> CliResult<Self> {
        let spec = config.network_spec(VGG16_CIFAR)?;
        let (mime, relu) = profiles::load(config, &spec)?;
        let opts = profiles::cost_options(config, &spec);
        Ok(CostSetup { spec, mime, relu, opts })
    }

    pub fn profiles_for(&self, case: InferenceCase) -> &ProfileSet {
        match case {
            InferenceCase::Mime => &self.mime,
            _ => &self.relu,
        }
    }

    pub fn run(&self, config: &ExperimentConfig, case: InferenceCase, mode: TaskMode) -> CliResult<Vec<LayerCostReport>> {
        let schedule = config.schedule.build(mode);
        Ok(energy_schedule(&self.spec, &config.hardware, case, &schedule, self.profiles_for(case), &self.opts)?)
    }
}

fn modes(config: &ExperimentConfig, default: &[TaskMode]) -> Vec<TaskMode> {
    match config.schedule.mode {
        Some(m) => vec![m],
        None => default.to_vec(),
    }
}

fn cases(config: &ExperimentConfig) -> Vec<InferenceCase> {
    config.cases.iter().map(|c| c.to_case(config.ablation.weight_sparsity)).collect()
}

pub fn energy(config: &ExperimentConfig) -> CliResult<OutputDir> {
    let setup = CostSetup::new(config)?;
    let mut rows = Vec::new();
    for mode in modes(config, &[TaskMode::Singular, TaskMode::Pipelined]) {
        let base = setup.run(config, InferenceCase::DenseBaseline, mode)?;
        for case in cases(config) {
            for (r, b) in setup.run(config, case, mode)?.iter().zip(&base) {
                let e = &r.energy;
                rows.push(vec![
                    mode.label().to_string(),
                    r.layer.clone(),
                    case.label(),
                    num(e.e_dram),
                    num(e.e_cache),
                    num(e.e_reg),
                    num(e.e_mac),
                    num(e.total),
                    num(b.energy.total / e.total),
                ]);
            }
        }
    }
    let mut out = OutputDir::create(&config.output_dir)?;
    out.csv("energy.csv", &ENERGY_HEADER, &rows)?;
    finish("energy", config, out)
}

pub fn throughput(config: &ExperimentConfig) -> CliResult<OutputDir> {
    let setup = CostSetup::new(config)?;
    let mut rows = Vec::new();
    for mode in modes(config, &[TaskMode::Singular]) {
        let base = setup.run(config, InferenceCase::DenseBaseline, mode)?;
        for case in cases(config) {
            for (r, b) in setup.run(config, case, mode)?.iter().zip(&base) {
                rows.push(vec![
                    mode.label().to_string(),
                    r.layer.clone(),
                    case.label(),
                    num(r.sparsity_in),
                    num(r.effective_macs),
                    num(r.dense_macs),
                    num(throughput_layer(r, b)?),
                ]);
            }
        }
    }
    let mut out = OutputDir::create(&config.output_dir)?;
    out.csv("throughput.csv", &THROUGHPUT_HEADER, &rows)?;
    finish("throughput", config, out)
}

pub fn ablate(config: &ExperimentConfig) -> CliResult<OutputDir> {
    let setup = CostSetup::new(config)?;
    let mode = modes(config, &[TaskMode::Pipelined])[0];
    let schedule = config.schedule.build(mode);
    let variants = standard_variants(&config.hardware);
    let ablation = ablation_compare(&setup.spec, &variants, InferenceCase::Mime, &schedule, &setup.mime, &setup.opts)?;
    let pruned = pruned_compare(
        &setup.spec,
        &config.hardware,
        &schedule,
        &setup.mime,
        &setup.relu,
        config.ablation.weight_sparsity,
        &setup.opts,
    )?;
    let a_rows: Vec<Vec<String>> = ablation
        .iter()
        .map(|r| {
            vec![r.layer.clone(), r.variant.clone(), r.pe_count.to_string(), num(r.cache_kb), num(r.total), num(r.ratio_vs_case_a)]
        })
        .collect();
    let p_rows: Vec<Vec<String>> = pruned
        .iter()
        .map(|r| {
            vec![
                r.layer.clone(),
                r.n_weights.to_string(),
                r.n_thresholds.to_string(),
                num(r.mime_total),
                num(r.pruned_total),
                num(r.ratio),
            ]
        })
        .collect();
    let mut out = OutputDir::create(&config.output_dir)?;
    out.csv("ablation.csv", &ABLATION_HEADER, &a_rows)?;
    out.csv("pruned.csv", &PRUNED_HEADER, &p_rows)?;
    finish("ablate", config, out)
}

// ---------------------------------------------------------------- training

/// Train and test data of one task.
pub struct TaskData {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::input(path, e))
}

fn idx_task(t: &IdxTask) -> CliResult<TaskData> {
    Ok(TaskData {
        name: t.name.clone(),
        train: idx_dataset(&read(&t.train_images)?, &read(&t.train_labels)?, t.classes)?,
        test: idx_dataset(&read(&t.test_images)?, &read(&t.test_labels)?, t.classes)?,
    })
}

fn synthetic_task(name: &str) -> CliResult<SyntheticTask> {
    match name {
        "parent" => Ok(SyntheticTask::Parent),
        "child_binary" => Ok(SyntheticTask::ChildBinary),
        "child_ternary" => Ok(SyntheticTask::ChildTernary),
        other => Err(CliError::config(format!(
            "unknown synthetic task `{other}` (known: parent, child_binary, child_ternary)"
        ))),
    }
}

fn synthetic_data(task: SyntheticTask, config: &ExperimentConfig) -> CliResult<TaskData> {
    let (train, test) = synthetic_split(task, config.train.n_train, config.train.n_test, config.seed)?;
    Ok(TaskData { name: task.name().to_string(), train, test })
}

/// Parent data and the data of every child task.
pub fn load_tasks(config: &ExperimentConfig) -> CliResult<(TaskData, Vec<TaskData>)> {
    match &config.train.dataset {
        DatasetConfig::Synthetic => {
            let parent = synthetic_data(SyntheticTask::Parent, config)?;
            let children = config
                .train
                .tasks
                .iter()
                .map(|t| match synthetic_task(t)? {
                    SyntheticTask::Parent => Err(CliError::config("`parent` cannot be a child task")),
                    task => synthetic_data(task, config),
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok((parent, children))
        }
        DatasetConfig::Idx { parent, children } => {
            Ok((idx_task(parent)?, children.iter().map(idx_task).collect::<CliResult<Vec<_>>>()?))
        }
    }
}

pub fn training_network(config: &ExperimentConfig, parent_classes: usize) -> CliResult<NetworkSpec> {
    let spec = match (&config.network.fixture, &config.network.layers) {
        (None, None) if config.network.footprint.is_none() => fixtures::desk_cnn(parent_classes)?,
        _ => config.network_spec(DESK_CNN)?,
    };
    if spec.classifier_classes == parent_classes {
        Ok(spec)
    } else {
        Ok(spec.with_classifier(parent_classes)?)
    }
}

/// Result of threshold training for one child task.
pub struct ChildOutcome {
    pub name: String,
    pub spec: NetworkSpec,
    pub weights: Weights,
    pub thresholds: mime_core::ThresholdSet,
    pub history: Vec<EpochMetrics>,
    pub finetune_history: Vec<EpochMetrics>,
    pub mime: Evaluation,
    pub finetuned: Evaluation,
    pub mime_profile: SparsityProfile,
    pub relu_profile: SparsityProfile,
}

pub struct TrainOutcome {
    pub spec: NetworkSpec,
    pub parent: Weights,
    pub parent_history: Vec<EpochMetrics>,
    pub parent_eval: Evaluation,
    pub parent_config: TrainConfig,
    pub child_config: TrainConfig,
    pub children: Vec<ChildOutcome>,
}

/// Parent training, then per child: thresholds on the frozen parent and a
/// fully fine-tuned baseline from the same starting point.
pub fn run_training(config: &ExperimentConfig) -> CliResult<TrainOutcome> {
    let (parent_data, children_data) = load_tasks(config)?;
    let spec = training_network(config, parent_data.train.classes)?;
    let parent_config = TrainConfig { epochs: config.train.parent_epochs, seed: config.seed, ..config.trainer };
    let child_config = TrainConfig { seed: config.seed, ..config.trainer };
    let parent = train_parent(&spec, &parent_data.train, &parent_config)?;
    let parent_eval = evaluate(&spec, &parent.weights, None, &parent_data.test)?;
    let mut children = Vec::new();
    for data in children_data {
        let (child_spec, init) = attach_head(&spec, &parent.weights, data.train.classes, config.seed)?;
        let th = train_thresholds(&child_spec, &init, &data.train, &data.name, &child_config)?;
        let weights = th.child_weights(&init);
        let ft = train_finetuned(&child_spec, init.clone(), &data.train, &child_config)?;
        let mime = evaluate(&child_spec, &weights, Some(&th.thresholds), &data.test)?;
        let finetuned = evaluate(&child_spec, &ft.weights, None, &data.test)?;
        let mut mime_profile =
            measure_sparsity(&child_spec, &weights, SparsityMode::Mime(&th.thresholds), &data.name, &data.test.inputs)?;
        mime_profile.source = SparsitySource::Mime;
        let mut relu_profile = measure_sparsity(&child_spec, &ft.weights, SparsityMode::Relu, &data.name, &data.test.inputs)?;
        relu_profile.source = SparsitySource::Relu;
        children.push(ChildOutcome {
            name: data.name,
            spec: child_spec,
            weights,
            thresholds: th.thresholds,
            history: th.history,
            finetune_history: ft.history,
            mime,
            finetuned,
            mime_profile,
            relu_profile,
        });
    }
    Ok(TrainOutcome {
        spec,
        parent: parent.weights,
        parent_history: parent.history,
        parent_eval,
        parent_config,
        child_config,
        children,
    })
}

fn metric_rows(task: &str, phase: &str, history: &[EpochMetrics]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|m| {
            vec![
                task.to_string(),
                phase.to_string(),
                m.epoch.to_string(),
                num(m.loss),
                num(m.ce),
                num(m.lt),
                num(m.accuracy),
                num(m.mean_sparsity),
            ]
        })
        .collect()
}

pub fn train(config: &ExperimentConfig) -> CliResult<OutputDir> {
    let t = run_training(config)?;
    let mut metrics = metric_rows("parent", "parent", &t.parent_history);
    let mut evaluation = Vec::new();
    let mut mime_set = ProfileSet::new();
    let mut relu_set = ProfileSet::new();
    let mut out = OutputDir::create(&config.output_dir)?;
    out.text(
        "checkpoint_parent.json",
        &Checkpoint::new(t.spec.clone(), t.parent.clone(), None, t.parent_config.clone()).to_json(),
    )?;
    for c in &t.children {
        metrics.extend(metric_rows(&c.name, "thresholds", &c.history));
        metrics.extend(metric_rows(&c.name, "finetune", &c.finetune_history));
        evaluation.push(vec![
            c.name.clone(),
            num(c.finetuned.accuracy),
            num(c.mime.accuracy),
            num(c.mime.accuracy / c.finetuned.accuracy),
            num(c.finetuned.mean_sparsity),
            num(c.mime.mean_sparsity),
        ]);
        out.text(&format!("thresholds_{}.json", c.name), &c.thresholds.to_json())?;
        out.text(
            &format!("checkpoint_{}.json", c.name),
            &Checkpoint::new(c.spec.clone(), c.weights.clone(), Some(&c.thresholds), t.child_config.clone()).to_json(),
        )?;
        mime_set.insert(c.name.clone(), c.mime_profile.clone());
        relu_set.insert(c.name.clone(), c.relu_profile.clone());
    }
    out.csv("metrics.csv", &METRICS_HEADER, &metrics)?;
    out.csv("evaluation.csv", &EVALUATION_HEADER, &evaluation)?;
    out.text("profiles_mime.json", &profiles::profile_set_json(&mime_set))?;
    out.text("profiles_relu.json", &profiles::profile_set_json(&relu_set))?;
    finish("train", config, out)
}

// ---------------------------------------------------------------- sparsity

fn profile_rows(p: &SparsityProfile, published: impl Fn(&str) -> bool) -> Vec<Vec<String>> {
    let source = match p.source {
        SparsitySource::Mime => "mime",
        SparsitySource::Relu => "relu",
    };
    p.layers
        .iter()
        .map(|l| vec![source.into(), p.task_id.clone(), l.label.clone(), l.display(), bool_str(published(&l.label))])
        .collect()
}

/// Measures a checkpoint when `measure` is configured; otherwise re-emits
/// the reference tables.
pub fn sparsity(config: &ExperimentConfig) -> CliResult<OutputDir> {
    let mut out_rows = Vec::new();
    let mut profile_doc = None;
    match &config.measure {
        Some(m) => {
            let ck = Checkpoint::from_json(&std::fs::read_to_string(&m.checkpoint).map_err(|e| CliError::input(&m.checkpoint, e))?)?;
            let (parent, children) = load_tasks(config)?;
            let data = match children.into_iter().find(|c| c.name == m.task) {
                Some(d) => d,
                None if m.task == parent.name => parent,
                None => return Err(CliError::config(format!("no dataset for task `{}`", m.task))),
            };
            let thresholds = ck.threshold_set()?;
            let mut p = match &thresholds {
                Some(t) => measure_sparsity(&ck.spec, &ck.weights, SparsityMode::Mime(t), &m.task, &data.test.inputs)?,
                None => measure_sparsity(&ck.spec, &ck.weights, SparsityMode::Relu, &m.task, &data.test.inputs)?,
            };
            p.source = if thresholds.is_some() { SparsitySource::Mime } else { SparsitySource::Relu };
            out_rows.extend(profile_rows(&p, |_| false));
            profile_doc = Some(p);
        }
        None => {
            let spec = config.network_spec(VGG16_CIFAR)?;
            let fill = config.interpolate.then_some(&spec);
            for source in [SparsitySource::Mime, SparsitySource::Relu] {
                for p in fixtures::fixture_profiles(source, fill)?.values() {
                    out_rows.extend(profile_rows(p, |l| PUBLISHED_LAYERS.contains(&l)));
                }
            }
        }
    }
    let mut out = OutputDir::create(&config.output_dir)?;
    out.csv("sparsity.csv", &SPARSITY_HEADER, &out_rows)?;
    if let Some(p) = profile_doc {
        let mut set = ProfileSet::new();
        set.insert(p.task_id.clone(), p);
        out.text("profile.json", &profiles::profile_set_json(&set))?;
    }
    finish("sparsity", config, out)
}
