//! Experiment files.
//!
//! ```toml
//! schema_version = 1
//! name = "demo"
//! seeds = [0, 1]
//! epsilons = [0.1, 0.3]
//!
//! [dataset]
//! n_train = 5000
//! n_test = 500
//! train = { generator = "syn_measurement" }
//!
//! [[victims]]
//! name = "Linear"
//! arch = { kind = "linear" }
//! train = { epochs = 20, batch_size = 64, learning_rate = 0.01 }
//!
//! [[attacks]]
//! label = "C1"
//! intervene = ["C1"]
//! modes = ["whitebox", "perturbation"]
//! substitutes = ["Linear"]
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, BudgetScale, Mode, VarRef};
use crate::datasets::{GeneratorSpec, PENDULUM_CLASSES};
use crate::error::{CadeError, Result};
use crate::models::{Arch, Task, TrainConfig};
use crate::scm::CounterfactualEngine;

pub const SCHEMA_VERSION: u32 = 1;

/// Name that stands for "no model" in substitute lists.
pub const NO_SUBSTITUTE: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seeds: Vec<u64>,
    /// Budgets every attack group is run at.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub dataset: DatasetConfig,
    pub victims: Vec<VictimSpec>,
    #[serde(default)]
    pub attacks: Vec<AttackGroup>,
    /// Default output directory, relative to the working directory.
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub train: GeneratorSpec,
    /// Generator for the test split; defaults to the training one.
    #[serde(default)]
    pub test: Option<GeneratorSpec>,
    #[serde(default)]
    pub task: TaskKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[default]
    Regression,
    Classification,
}

impl DatasetConfig {
    pub fn test_spec(&self) -> GeneratorSpec {
        self.test.unwrap_or(self.train)
    }

    pub fn task(&self) -> Task {
        match self.task {
            TaskKind::Regression => Task::Regression,
            TaskKind::Classification => Task::Classification {
                n_classes: PENDULUM_CLASSES,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimSpec {
    pub name: String,
    pub arch: Arch,
    /// `seed` and `task` are filled in per replicate.
    pub train: TrainConfig,
}

/// One intervened set, run under each listed mode and substitute at every
/// budget of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackGroup {
    pub label: String,
    #[serde(default)]
    pub intervene: Vec<VarRef>,
    pub modes: Vec<Mode>,
    /// Victim names to craft on; `none` runs the model-free variant.
    #[serde(default)]
    pub substitutes: Vec<String>,
    #[serde(default)]
    pub budget: BudgetScale,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
}

impl AttackGroup {
    /// Substitutes a mode is run with: random attacks never use a model,
    /// gradient attacks always do.
    pub fn substitutes_for(&self, mode: Mode) -> Vec<String> {
        match mode {
            Mode::Random => vec![NO_SUBSTITUTE.to_string()],
            Mode::Perturbation => self.substitutes.clone(),
            Mode::Whitebox | Mode::Fgsm | Mode::Pgd => self
                .substitutes
                .iter()
                .filter(|s| s.as_str() != NO_SUBSTITUTE)
                .cloned()
                .collect(),
        }
    }

    pub fn attack_config(&self, mode: Mode, epsilon: f64, seed: u64) -> AttackConfig {
        let mut cfg = AttackConfig {
            mode,
            intervene: self.intervene.clone(),
            epsilon,
            budget: self.budget,
            seed,
            ..AttackConfig::new(mode, &[], epsilon)
        };
        if let Some(a) = self.step_size {
            cfg.step_size = a;
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        cfg
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CadeError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CadeError::from(e).context(&path.display().to_string()))?;
        Self::from_toml(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Structural checks plus resolution of every variable name against
    /// the dataset's engine.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CadeError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(CadeError::Config("seeds must not be empty".into()));
        }
        if self.dataset.n_train == 0 || self.dataset.n_test == 0 {
            return Err(CadeError::Config("n_train and n_test must be positive".into()));
        }
        if self.victims.is_empty() {
            return Err(CadeError::Config("at least one victim is needed".into()));
        }
        let mut names = BTreeSet::new();
        for v in &self.victims {
            if v.name == NO_SUBSTITUTE || !names.insert(v.name.as_str()) {
                return Err(CadeError::Config(format!("victim name {:?} is reserved or repeated", v.name)));
            }
        }
        if !self.attacks.is_empty() && self.epsilons.is_empty() {
            return Err(CadeError::Config("attacks need a non-empty epsilons list".into()));
        }
        let (engine, _) = self.dataset.train.engine()?;
        if self.dataset.test_spec().name() != self.dataset.train.name() {
            return Err(CadeError::Config("train and test generators must share an SCM".into()));
        }
        self.dataset.test_spec().engine()?;
        // Placeholder ranges let range budgets validate before any data exists.
        let ranges = vec![1.0; engine.names().len()];
        let mut labels = BTreeSet::new();
        for g in &self.attacks {
            if !labels.insert(g.label.as_str()) {
                return Err(CadeError::Config(format!("attack label {:?} repeated", g.label)));
            }
            if g.modes.is_empty() {
                return Err(CadeError::Config(format!("attack {:?} lists no modes", g.label)));
            }
            for s in &g.substitutes {
                if s != NO_SUBSTITUTE && !names.contains(s.as_str()) {
                    return Err(CadeError::Config(format!("attack {:?}: unknown substitute {s:?}", g.label)));
                }
            }
            for &mode in &g.modes {
                if mode != Mode::Random && g.substitutes_for(mode).is_empty() {
                    return Err(CadeError::Config(format!(
                        "attack {:?}: mode {mode:?} has no usable substitute",
                        g.label
                    )));
                }
                for &eps in &self.epsilons {
                    g.attack_config(mode, eps, 0)
                        .resolve(&engine, Some(&ranges))
                        .map_err(|e| e.context(&format!("attack {:?}", g.label)))?;
                }
            }
        }
        Ok(())
    }
}

pub const SYNMEASUREMENT_FIG6: &str = include_str!("../../configs/synmeasurement-fig6.toml");
pub const PENDULUM_SIM: &str = include_str!("../../configs/pendulum-sim.toml");

/// Bundled configs by name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "synmeasurement-fig6" => Some(SYNMEASUREMENT_FIG6),
        "pendulum-sim" => Some(PENDULUM_SIM),
        _ => None,
    }
}

pub const BUNDLED: [&str; 2] = ["synmeasurement-fig6", "pendulum-sim"];
