//! Replicates, the attack grid and bundle output.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, NO_SUBSTITUTE};
use super::summary::{write_summaries, Summary};
use crate::attacks::{evaluate, run_attack, variable_ranges, AttackConfig, AttackReport, FeatureSpace, Mode};
use crate::datasets::Dataset;
use crate::error::{CadeError, Result};
use crate::matrix::Matrix;
use crate::models::{train, Model, Target, Task};

const DATA_TAG: u64 = 0x6461_7461;
const VICTIM_TAG: u64 = 0x7669_6374;
const CELL_TAG: u64 = 0x6365_6c6c;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of kind `tag` inside replicate `master`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ tag) ^ index)
}

/// Data and trained victims for one seed.
pub struct Replicate {
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub victims: Vec<(String, Model)>,
}

impl Replicate {
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let ctx = |e: CadeError| e.context(&format!("{} seed {seed}", cfg.name));
        let (train_set, test_set) = generate_split(cfg, seed).map_err(ctx)?;
        let task = cfg.dataset.task();
        let victims = cfg
            .victims
            .par_iter()
            .enumerate()
            .map(|(k, v)| {
                let tc = crate::models::TrainConfig {
                    seed: derive_seed(seed, VICTIM_TAG, k as u64),
                    task,
                    ..v.train.clone()
                };
                let fit = train(&v.arch, &train_set, &tc).map_err(|e| ctx(e.context(&format!("victim {}", v.name))))?;
                Ok((v.name.clone(), fit.model))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed,
            train: train_set,
            test: test_set,
            victims,
        })
    }

    pub fn victim(&self, name: &str) -> Option<&Model> {
        self.victims.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Training and test sets of one replicate.
pub fn generate_split(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let d = &cfg.dataset;
    let train_set = d.train.generate(d.n_train, derive_seed(seed, DATA_TAG, 0))?;
    let test_set = d.test_spec().generate(d.n_test, derive_seed(seed, DATA_TAG, 1))?;
    Ok((train_set, test_set))
}

/// What a cell ran; echoed into its report header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub label: String,
    /// Attack mode name, or `clean`.
    pub mode: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
}

pub const CLEAN: &str = "clean";

#[derive(Debug, Clone)]
struct CellPlan {
    meta: CellMeta,
    substitute: String,
}

fn mode_name(mode: Mode) -> String {
    serde_json::to_value(mode)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .expect("mode serializes to a string")
}

fn plan_cells(cfg: &ExperimentConfig, seed: u64) -> Vec<CellPlan> {
    let mut cells = vec![CellPlan {
        meta: CellMeta {
            label: CLEAN.into(),
            mode: CLEAN.into(),
            epsilon: None,
            seed,
            attack: None,
        },
        substitute: NO_SUBSTITUTE.into(),
    }];
    for g in &cfg.attacks {
        for &mode in &g.modes {
            for sub in g.substitutes_for(mode) {
                for &eps in &cfg.epsilons {
                    let index = cells.len() as u64;
                    cells.push(CellPlan {
                        meta: CellMeta {
                            label: g.label.clone(),
                            mode: mode_name(mode),
                            epsilon: Some(eps),
                            seed,
                            attack: Some(g.attack_config(mode, eps, derive_seed(seed, CELL_TAG, index))),
                        },
                        substitute: sub.clone(),
                    });
                }
            }
        }
    }
    cells
}

fn file_stem(plan: &CellPlan) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || "+-.".contains(c) { c } else { '_' })
            .collect::<String>()
    };
    match plan.meta.epsilon {
        None => format!("clean_seed{}", plan.meta.seed),
        Some(e) => format!(
            "{}_{}_{}_eps{}_seed{}",
            clean(&plan.meta.label),
            plan.meta.mode,
            clean(&plan.substitute),
            e,
            plan.meta.seed
        ),
    }
}

fn report_targets(test: &Dataset, task: Task) -> Result<(Vec<Target>, Vec<f64>)> {
    let t = task.targets(test)?;
    let f = t
        .iter()
        .map(|t| match *t {
            Target::Real(v) => v,
            Target::Class(k) => k as f64,
        })
        .collect();
    Ok((t, f))
}

fn run_cell(rep: &Replicate, plan: &CellPlan, task: Task) -> Result<AttackReport> {
    let test = &rep.test;
    let (targets, target_values) = report_targets(test, task)?;
    let adv = match &plan.meta.attack {
        None => test.features.clone(),
        Some(ac) => {
            let ranges = variable_ranges(&rep.train);
            let attack = ac.resolve(&test.engine, Some(&ranges))?;
            let model = match plan.substitute.as_str() {
                NO_SUBSTITUTE => None,
                name => Some(
                    rep.victim(name)
                        .ok_or_else(|| CadeError::Config(format!("unknown substitute {name:?}")))?,
                ),
            };
            let states: Vec<Vec<f64>> = (0..test.n()).map(|i| test.state(i)).collect();
            let space = FeatureSpace::of(test);
            let out = run_attack(model, &space, &states, &targets, &attack)?;
            let rows: Vec<Vec<f64>> = out.iter().map(|s| test.features_of(s)).collect();
            Matrix::from_rows(&rows)?
        }
    };
    let refs: Vec<(&str, &Model)> = rep.victims.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let (scores, examples) = evaluate(&refs, &test.features, &adv, &target_values, task)?;
    let meta = serde_json::to_string(&plan.meta).expect("cell meta serializes");
    Ok(AttackReport::new(
        meta,
        &plan.substitute,
        task,
        test.column_names.clone(),
        examples,
        scores,
    ))
}

/// A finished experiment on disk.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    /// Cell files in grid order, relative to `dir`.
    pub cells: Vec<String>,
    pub summary: Summary,
}

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";
pub const CELL_DIR: &str = "cells";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Manifest {
    pub name: String,
    pub cells: Vec<String>,
}

/// Generate data, train every victim and run the full attack grid for each
/// seed, writing per-cell reports and the summaries under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Bundle> {
    cfg.validate()?;
    let task = cfg.dataset.task();
    let replicates = cfg
        .seeds
        .par_iter()
        .map(|&s| Replicate::build(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, CellPlan)> = replicates
        .iter()
        .enumerate()
        .flat_map(|(r, rep)| plan_cells(cfg, rep.seed).into_iter().map(move |p| (r, p)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|(r, plan)| {
            run_cell(&replicates[*r], plan, task).map_err(|e| {
                e.context(&format!("{} cell {}", cfg.name, file_stem(plan)))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cell_dir = out.join(CELL_DIR);
    fs::create_dir_all(&cell_dir).map_err(|e| CadeError::from(e).context(&cell_dir.display().to_string()))?;
    let mut cells = Vec::with_capacity(jobs.len());
    for ((_, plan), report) in jobs.iter().zip(&reports) {
        let rel = format!("{CELL_DIR}/{}.csv", file_stem(plan));
        fs::write(out.join(&rel), report.to_csv_string())?;
        cells.push(rel);
    }
    fs::write(out.join(CONFIG_COPY), cfg.to_toml())?;
    let manifest = Manifest {
        name: cfg.name.clone(),
        cells: cells.clone(),
    };
    fs::write(
        out.join(MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    let summary = Summary::from_reports(&cfg.name, &reports)?;
    write_summaries(&summary, out)?;
    Ok(Bundle {
        dir: out.to_path_buf(),
        cells,
        summary,
    })
}

/// `run` with the budget list replaced.
pub fn budget_sweep(cfg: &ExperimentConfig, epsilons: &[f64], out: &Path) -> Result<Bundle> {
    let mut swept = cfg.clone();
    swept.epsilons = epsilons.to_vec();
    run(&swept, out)
}

/// Recompute the summaries of a bundle from its cell files.
pub fn report(dir: &Path) -> Result<Bundle> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CadeError::from(e).context(&path.display().to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CadeError::Parse(format!("{MANIFEST}: {e}")))?;
    let reports = manifest
        .cells
        .iter()
        .map(|rel| {
            let p = dir.join(rel);
            let f = fs::File::open(&p).map_err(|e| CadeError::from(e).context(&p.display().to_string()))?;
            AttackReport::read_csv(f).map_err(|e| e.context(rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_reports(&manifest.name, &reports)?;
    write_summaries(&summary, dir)?;
    Ok(Bundle {
        dir: dir.to_path_buf(),
        cells: manifest.cells,
        summary,
    })
}
