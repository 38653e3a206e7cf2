//! Run configuration: TOML with rejected unknown keys, defaults, dotted
//! overrides and cross-field validation.

use std::path::{Path, PathBuf};

use plasticity_core::budget::BiasSchedule;
use plasticity_core::data::ReplayConfig;
use plasticity_core::data::SyntheticSpec;
use plasticity_core::nn::RslParams;
use plasticity_core::optim::{LrSchedule, OptimizerKind, TwoSpeedConfig};
use plasticity_core::structural::GrowScorer;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Grow,
    Prune,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Grow => "grow",
            Method::Prune => "prune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Cifar10,
    Cifar100,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Convnet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory holding the raw dataset files.
    pub path: Option<PathBuf>,
    /// Keep only the first `n` train examples (0 keeps all).
    pub train_limit: usize,
    pub test_limit: usize,
    pub normalize: bool,
    pub synthetic: Option<SyntheticSpec>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            train_limit: 0,
            test_limit: 0,
            normalize: true,
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKindConfig {
    Iid,
    Split,
    Permuted,
    RandomLabel,
    HardEasy,
    BinaryPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    pub kind: StreamKindConfig,
    pub batch_size: usize,
    /// Number of tasks for non-IID streams.
    pub tasks: usize,
    /// Epochs per task; defaults to `epochs_per_cycle` for split streams.
    pub epochs: Option<usize>,
    /// Optimizer steps per task (hard/easy stream).
    pub steps: usize,
    pub subset_size: usize,
    pub eval_size: usize,
    pub images_per_task: usize,
    pub hard_classes: usize,
    pub per_class: usize,
    pub hard_first: bool,
    pub shuffle_classes: bool,
    pub replay: Option<ReplayConfig>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            kind: StreamKindConfig::Iid,
            batch_size: 512,
            tasks: 5,
            epochs: None,
            steps: 780,
            subset_size: 10_000,
            eval_size: 2_000,
            images_per_task: 1_200,
            hard_classes: 5,
            per_class: 500,
            hard_first: true,
            shuffle_classes: false,
            replay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub arch: Arch,
    pub hidden: Vec<usize>,
    pub channels: Vec<usize>,
    pub head: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Mlp,
            hidden: vec![256, 256],
            channels: vec![32, 64],
            head: vec![512, 512, 256],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.01,
            schedule: LrSchedule::Cosine,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowConfig {
    pub seed_fraction: f64,
    pub scorer: GrowScorer,
}

impl Default for GrowConfig {
    fn default() -> Self {
        GrowConfig {
            seed_fraction: 0.1,
            scorer: GrowScorer::Activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    pub rewind: bool,
    /// Global epoch whose weights survivors are rewound to (0 = init).
    pub rewind_epoch: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            rewind: true,
            rewind_epoch: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Net2WiderConfig {
    pub noise_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Interventions {
    pub two_speed: Option<TwoSpeedConfig>,
    pub moment_transplant: bool,
    pub net2wider: Option<Net2WiderConfig>,
    pub gradmax: bool,
    pub rsl: Option<RslParams>,
}

impl Interventions {
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.two_speed.is_some() {
            out.push("two_speed");
        }
        if self.moment_transplant {
            out.push("moment_transplant");
        }
        if self.net2wider.is_some() {
            out.push("net2wider");
        }
        if self.gradmax {
            out.push("gradmax");
        }
        if self.rsl.is_some() {
            out.push("rsl");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    /// Size of the fixed per-event diagnostic batch.
    pub batch: usize,
    /// Measure newborn and incumbent cohorts after every epoch of a cycle.
    pub catchup: bool,
    pub early_window: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            enabled: true,
            batch: 512,
            catchup: true,
            early_window: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub dataset: DatasetKind,
    /// Global compactness in (0, 1]; required unless the method is dense.
    #[serde(default)]
    pub compactness: Option<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default = "default_epochs_per_cycle")]
    pub epochs_per_cycle: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub grow: GrowConfig,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub interventions: Interventions,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_schedule() -> String {
    "neutral".into()
}
fn default_cycles() -> usize {
    5
}
fn default_epochs_per_cycle() -> usize {
    20
}
fn default_tau() -> f64 {
    0.05
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// Parses TOML text, applies dotted `key=value` overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn bias_schedule(&self) -> Result<BiasSchedule> {
        BiasSchedule::parse(&self.schedule).map_err(|e| HarnessError::invalid(e.to_string()))
    }

    /// Compactness used for planning; 1.0 for dense runs.
    pub fn c(&self) -> f64 {
        self.compactness.unwrap_or(1.0)
    }

    pub fn replay(&self) -> Option<ReplayConfig> {
        self.stream.replay
    }

    /// Total optimizer epochs of an IID run.
    pub fn total_epochs(&self) -> usize {
        self.cycles * self.epochs_per_cycle
    }

    /// Checks every cross-field rule and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match (self.method, self.compactness) {
            (Method::Dense, Some(c)) if c != 1.0 => {
                errs.push(format!("compactness = {c}: dense runs keep every unit"));
            }
            (Method::Grow | Method::Prune, None) => {
                errs.push(format!("compactness: required for method = \"{}\"", self.method.name()));
            }
            (_, Some(c)) if !(c > 0.0 && c <= 1.0) => {
                errs.push(format!("compactness = {c}: must be in (0, 1]"));
            }
            _ => {}
        }
        if let Err(e) = BiasSchedule::parse(&self.schedule) {
            errs.push(format!("schedule: {e}"));
        }
        if self.cycles == 0 {
            errs.push("cycles: must be at least 1".into());
        }
        if self.epochs_per_cycle == 0 {
            errs.push("epochs_per_cycle: must be at least 1".into());
        }
        if !self.tau.is_finite() {
            errs.push("tau: must be finite".into());
        }
        if self.seeds.is_empty() {
            errs.push("seeds: at least one seed is required".into());
        }
        if self.stream.batch_size == 0 {
            errs.push("stream.batch_size: must be positive".into());
        }
        if self.stream.kind != StreamKindConfig::Iid && self.cycles > self.stream.tasks {
            errs.push(format!(
                "cycles = {}: cannot exceed stream.tasks = {} (edits happen at task boundaries)",
                self.cycles, self.stream.tasks
            ));
        }
        if let Some(r) = &self.stream.replay {
            if let Err(e) = r.validate() {
                errs.push(format!("stream.replay: {e}"));
            }
            if matches!(self.stream.kind, StreamKindConfig::Iid | StreamKindConfig::Permuted) {
                errs.push("stream.replay: not supported for iid or permuted streams".into());
            }
        }
        if self.dataset == DatasetKind::Synthetic && self.data.synthetic.is_none() {
            errs.push("data.synthetic: required when dataset = \"synthetic\"".into());
        }
        if self.dataset != DatasetKind::Synthetic && self.data.path.is_none() {
            errs.push("data.path: required for file-backed datasets".into());
        }
        match self.model.arch {
            Arch::Mlp if self.model.hidden.is_empty() => errs.push("model.hidden: needs at least one layer".into()),
            Arch::Convnet if self.model.head.is_empty() => errs.push("model.head: needs at least one layer".into()),
            _ => {}
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            errs.push(format!("optimizer.lr = {}: must be positive", o.lr));
        }
        if !(0.0..=1.0).contains(&self.grow.seed_fraction) {
            errs.push("grow.seed_fraction: must be in [0, 1]".into());
        }
        let iv = &self.interventions;
        if self.method != Method::Grow {
            for name in iv.names() {
                if name != "rsl" {
                    errs.push(format!(
                        "interventions.{name}: requires method = \"grow\", got \"{}\"",
                        self.method.name()
                    ));
                }
            }
        }
        if let Some(ts) = &iv.two_speed {
            if let Err(e) = ts.validate() {
                errs.push(format!("interventions.two_speed: {e}"));
            }
        }
        if iv.moment_transplant && o.kind != OptimizerKind::Adam {
            errs.push("interventions.moment_transplant: requires optimizer.kind = \"adam\"".into());
        }
        if let Some(n) = &iv.net2wider {
            if !(n.noise_eps >= 0.0 && n.noise_eps.is_finite()) {
                errs.push("interventions.net2wider.noise_eps: must be >= 0".into());
            }
        }
        if iv.gradmax && iv.net2wider.is_some() {
            errs.push("interventions.gradmax and interventions.net2wider: choose one birth rule".into());
        }
        if let Some(r) = &iv.rsl {
            if let Err(e) = r.validate() {
                errs.push(format!("interventions.rsl: {e}"));
            }
        }
        if self.diagnostics.batch == 0 {
            errs.push("diagnostics.batch: must be positive".into());
        }
        if !(self.diagnostics.early_window > 0.0 && self.diagnostics.early_window <= 1.0) {
            errs.push("diagnostics.early_window: must be in (0, 1]".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(errs))
        }
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML value,
/// falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::invalid(format!("override {spec:?}: expected key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(HarnessError::invalid(format!("override {spec:?}: empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::invalid(format!("override {key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
