//! Counterfactual intervention attacks and feature-space baselines.
//!
//! Attacks operate on full engine states (every variable of the generating
//! process, target included) and score victims on the feature columns read
//! off those states.

mod report;
mod search;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use report::{evaluate, AttackReport, ExampleRow, Score, VictimScores};
pub use search::{cade_random, cade_whitebox, cade_whitebox_trace, fgsm, perturb_baseline, pgd, run_attack};

use crate::datasets::Dataset;
use crate::error::{CadeError, Result};
use crate::scm::{CounterfactualEngine, InterventionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Gradient search on the intervened set with consequence propagation.
    Whitebox,
    /// Uniform draw inside the budget, then propagation. Needs no victim.
    Random,
    /// The whitebox search (or, without a victim, the random draw) with
    /// descendants left at their factual values.
    Perturbation,
    Fgsm,
    Pgd,
}

impl Mode {
    pub fn is_intervention(&self) -> bool {
        matches!(self, Mode::Whitebox | Mode::Random | Mode::Perturbation)
    }
}

/// How `epsilon` maps to per-variable bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetScale {
    /// The same raw bound on every intervened variable.
    #[default]
    Absolute,
    /// `epsilon * range_i`, with `range_i` measured on the training set.
    Range,
}

/// A variable given by engine index or by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarRef {
    Index(usize),
    Name(String),
}

impl VarRef {
    fn resolve(&self, engine: &dyn CounterfactualEngine) -> Result<usize> {
        match self {
            VarRef::Index(i) if *i < engine.names().len() => Ok(*i),
            VarRef::Index(i) => Err(CadeError::Config(format!("variable index {i} out of range"))),
            VarRef::Name(n) => engine
                .index_of(n)
                .ok_or_else(|| CadeError::Config(format!("unknown variable {n:?}"))),
        }
    }
}

impl From<&str> for VarRef {
    fn from(s: &str) -> Self {
        VarRef::Name(s.to_string())
    }
}

impl From<usize> for VarRef {
    fn from(i: usize) -> Self {
        VarRef::Index(i)
    }
}

fn default_step_size() -> f64 {
    0.4
}

fn default_steps() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub mode: Mode,
    /// Intervened set; ignored by the feature-space baselines.
    #[serde(default)]
    pub intervene: Vec<VarRef>,
    pub epsilon: f64,
    #[serde(default)]
    pub budget: BudgetScale,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(mode: Mode, intervene: &[&str], epsilon: f64) -> Self {
        Self {
            mode,
            intervene: intervene.iter().map(|&s| VarRef::from(s)).collect(),
            epsilon,
            budget: BudgetScale::Absolute,
            step_size: default_step_size(),
            steps: default_steps(),
            seed: 0,
        }
    }

    /// Validate against `engine` and fix per-variable bounds. `ranges` holds
    /// one training-set range per engine variable and is needed only for
    /// range-scaled budgets.
    pub fn resolve(&self, engine: &dyn CounterfactualEngine, ranges: Option<&[f64]>) -> Result<Attack> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(CadeError::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(CadeError::Config("step_size must be >= 0".into()));
        }
        if matches!(self.mode, Mode::Whitebox | Mode::Pgd | Mode::Perturbation) && self.steps == 0 {
            return Err(CadeError::Config("iterative attacks need at least one step".into()));
        }
        let d = engine.names().len();
        let set: BTreeSet<usize> = self
            .intervene
            .iter()
            .map(|v| v.resolve(engine))
            .collect::<Result<_>>()?;
        if self.mode.is_intervention() {
            if set.is_empty() {
                return Err(CadeError::Config("intervened set is empty".into()));
            }
            let y = engine.y_index();
            let mut forbidden = engine.graph().ancestors(y);
            forbidden.insert(y);
            if let Some(bad) = set.intersection(&forbidden).next() {
                return Err(CadeError::Config(format!(
                    "cannot intervene on {:?}: it is the target or one of its ancestors",
                    engine.names()[*bad]
                )));
            }
        }
        let eps = match self.budget {
            BudgetScale::Absolute => vec![self.epsilon; d],
            BudgetScale::Range => {
                let r = ranges.ok_or_else(|| {
                    CadeError::Config("range-scaled budget needs variable ranges".into())
                })?;
                if r.len() != d || r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(CadeError::Config("need one nonnegative range per variable".into()));
                }
                r.iter().map(|v| self.epsilon * v).collect()
            }
        };
        Ok(Attack {
            mode: self.mode,
            mask: InterventionMask::from_indices(d, set)?,
            eps,
            step_size: self.step_size,
            steps: self.steps,
            seed: self.seed,
        })
    }

    /// Short stable description used in report headers.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("attack config serializes")
    }
}

/// A validated attack bound to one engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Attack {
    pub mode: Mode,
    pub mask: InterventionMask,
    /// Bound for each engine variable; only masked entries matter to the
    /// intervention modes.
    pub eps: Vec<f64>,
    pub step_size: f64,
    pub steps: usize,
    pub seed: u64,
}

/// Feature view of an engine: which engine variable feeds each feature.
#[derive(Clone, Copy)]
pub struct FeatureSpace<'a> {
    pub engine: &'a dyn CounterfactualEngine,
    pub feature_vars: &'a [usize],
}

impl<'a> FeatureSpace<'a> {
    pub fn of(ds: &'a Dataset) -> Self {
        Self {
            engine: &ds.engine,
            feature_vars: &ds.feature_vars,
        }
    }

    pub fn features(&self, state: &[f64]) -> Vec<f64> {
        self.feature_vars.iter().map(|&v| state[v]).collect()
    }
}

/// Per-variable `max - min` over the training states, scattered from the
/// dataset's feature ranges; the target gets its own range.
pub fn variable_ranges(ds: &Dataset) -> Vec<f64> {
    let mut r = vec![0.0; ds.engine.names().len()];
    for (k, (lo, hi)) in ds.feature_ranges().into_iter().enumerate() {
        r[ds.feature_vars[k]] = hi - lo;
    }
    let (lo, hi) = ds
        .target
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    r[ds.engine.y_index()] = hi - lo;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_pendulum_latent, gen_syn_measurement};

    #[test]
    fn rejects_target_and_ancestors() {
        let ds = gen_syn_measurement(10, 0).unwrap();
        for bad in ["y", "P1", "A"] {
            let cfg = AttackConfig::new(Mode::Whitebox, &[bad], 0.1);
            assert!(matches!(cfg.resolve(&ds.engine, None), Err(CadeError::Config(_))), "{bad}");
        }
        let ok = AttackConfig::new(Mode::Whitebox, &["CP", "C1"], 0.1);
        let a = ok.resolve(&ds.engine, None).unwrap();
        assert_eq!(a.mask.indices(), BTreeSet::from([4, 5]));
        let unknown = AttackConfig::new(Mode::Random, &["Q"], 0.1);
        assert!(unknown.resolve(&ds.engine, None).is_err());
        let empty = AttackConfig::new(Mode::Random, &[], 0.1);
        assert!(empty.resolve(&ds.engine, None).is_err());
        let neg = AttackConfig::new(Mode::Random, &["CP"], -0.1);
        assert!(neg.resolve(&ds.engine, None).is_err());
        // Baselines ignore the intervened set.
        assert!(AttackConfig::new(Mode::Fgsm, &[], 0.1).resolve(&ds.engine, None).is_ok());
    }

    #[test]
    fn range_scaled_budgets() {
        let ds = gen_pendulum_latent(500, 0.0, 0).unwrap();
        let ranges = variable_ranges(&ds);
        let mut cfg = AttackConfig::new(Mode::Random, &["light_angle"], 0.3);
        cfg.budget = BudgetScale::Range;
        assert!(cfg.resolve(&ds.engine, None).is_err());
        let a = cfg.resolve(&ds.engine, Some(&ranges)).unwrap();
        assert!((a.eps[1] - 0.3 * ranges[1]).abs() < 1e-15);
        assert!(ranges[1] > 0.7 && ranges[1] <= std::f64::consts::FRAC_PI_4);
    }

    #[test]
    fn config_parses_names_and_indices() {
        let cfg: AttackConfig =
            toml::from_str("mode = \"random\"\nintervene = [\"CP\", 5]\nepsilon = 0.2\n").unwrap();
        assert_eq!(cfg.intervene, vec![VarRef::Name("CP".into()), VarRef::Index(5)]);
        assert_eq!(cfg.steps, 20);
    }
}
