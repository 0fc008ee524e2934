//! Synthetic datasets: the three-feature linear toy process, SynMeasurement
//! and the Pendulum latent factors.
//!
//! Every generator is a pure function of `(n, params, seed)`. Each dataset
//! keeps the engine that produced it so attacks can run counterfactuals on
//! its rows, and the map from feature columns to engine variables.

mod io;
mod pendulum;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use io::{read_dataset, write_dataset, DatasetMeta, GENERATOR_VERSION};
pub use pendulum::{
    discretize_angle, PendulumConstants, PendulumSimulator, LIGHT_ANGLE, PENDULUM_ANGLE,
    PENDULUM_NAMES, SHADOW_LENGTH, SHADOW_POSITION,
};

use crate::error::{CadeError, Result};
use crate::matrix::Matrix;
use crate::scm::{CausalGraph, CounterfactualEngine, InterventionMask, NoiseSpec, Scm};

pub const PENDULUM_CLASSES: usize = 50;

/// Parameters of the linear toy process: `x1 -> y -> x2 <- x3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma_1: f64,
    pub sigma_y: f64,
    pub sigma_2: f64,
    pub sigma_3: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            c: 1.0,
            sigma_1: 1.0,
            sigma_y: 1.0,
            sigma_2: 1.0,
            sigma_3: 1.0,
        }
    }
}

impl ToyParams {
    fn validate(&self) -> Result<()> {
        let weights = [self.a, self.b, self.c];
        let sigmas = [self.sigma_1, self.sigma_y, self.sigma_2, self.sigma_3];
        if weights.iter().chain(&sigmas).any(|v| !v.is_finite()) {
            return Err(CadeError::Config("toy parameters must be finite".into()));
        }
        if sigmas.iter().any(|&s| s <= 0.0) {
            return Err(CadeError::Config("toy noise stds must be positive".into()));
        }
        Ok(())
    }
}

/// Which generator produced a dataset, with everything needed to rebuild it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    LinearToy {
        params: ToyParams,
    },
    SynMeasurement,
    Pendulum {
        noise_fraction: f64,
        /// Half-width of the uniform offset added to the rendering angle.
        #[serde(default = "default_noise_magnitude")]
        noise_magnitude: f64,
    },
}

fn default_noise_magnitude() -> f64 {
    0.1
}

impl GeneratorSpec {
    pub fn pendulum(noise_fraction: f64) -> Self {
        GeneratorSpec::Pendulum {
            noise_fraction,
            noise_magnitude: default_noise_magnitude(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::LinearToy { .. } => "linear_toy",
            GeneratorSpec::SynMeasurement => "syn_measurement",
            GeneratorSpec::Pendulum { .. } => "pendulum",
        }
    }

    /// Generate `n` rows with this spec.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        match *self {
            GeneratorSpec::LinearToy { params } => gen_linear_toy(n, params, seed),
            GeneratorSpec::SynMeasurement => gen_syn_measurement(n, seed),
            GeneratorSpec::Pendulum {
                noise_fraction,
                noise_magnitude,
            } => gen_pendulum_with(n, noise_fraction, noise_magnitude, seed),
        }
    }

    /// The generating engine and the engine variable behind each feature.
    pub fn engine(&self) -> Result<(Engine, Vec<usize>)> {
        match *self {
            GeneratorSpec::LinearToy { params } => {
                params.validate()?;
                Ok((Engine::Scm(toy_scm(&params)?), vec![0, 3, 2]))
            }
            GeneratorSpec::SynMeasurement => {
                Ok((Engine::Scm(syn_measurement_scm()?), vec![0, 1, 2, 4, 5, 6, 7]))
            }
            GeneratorSpec::Pendulum {
                noise_fraction,
                noise_magnitude,
            } => {
                if !(0.0..=1.0).contains(&noise_fraction) {
                    return Err(CadeError::Config(format!(
                        "noise_fraction {noise_fraction} outside [0, 1]"
                    )));
                }
                if !(noise_magnitude.is_finite() && noise_magnitude >= 0.0) {
                    return Err(CadeError::Config("noise_magnitude must be nonnegative".into()));
                }
                Ok((
                    Engine::Pendulum(PendulumSimulator::default()),
                    vec![LIGHT_ANGLE, SHADOW_LENGTH, SHADOW_POSITION],
                ))
            }
        }
    }
}

/// Counterfactual engine attached to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Scm(Scm),
    Pendulum(PendulumSimulator),
}

impl Engine {
    pub fn as_scm(&self) -> Option<&Scm> {
        match self {
            Engine::Scm(s) => Some(s),
            Engine::Pendulum(_) => None,
        }
    }
}

impl CounterfactualEngine for Engine {
    fn graph(&self) -> &CausalGraph {
        match self {
            Engine::Scm(s) => CounterfactualEngine::graph(s),
            Engine::Pendulum(p) => p.graph(),
        }
    }

    fn y_index(&self) -> usize {
        match self {
            Engine::Scm(s) => CounterfactualEngine::y_index(s),
            Engine::Pendulum(p) => p.y_index(),
        }
    }

    fn names(&self) -> &[String] {
        match self {
            Engine::Scm(s) => CounterfactualEngine::names(s),
            Engine::Pendulum(p) => p.names(),
        }
    }

    fn counterfactual(
        &self,
        x: &[f64],
        x_prime: &[f64],
        mask: &InterventionMask,
    ) -> Result<Vec<f64>> {
        match self {
            Engine::Scm(s) => CounterfactualEngine::counterfactual(s, x, x_prime, mask),
            Engine::Pendulum(p) => p.counterfactual(x, x_prime, mask),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: GeneratorSpec,
    pub seed: u64,
    /// `n x p`, columns named by `column_names`.
    pub features: Matrix,
    /// Real-valued target.
    pub target: Vec<f64>,
    /// Class labels for classification datasets.
    pub labels: Option<Vec<usize>>,
    pub column_names: Vec<String>,
    pub target_name: String,
    /// Engine variable index behind each feature column.
    pub feature_vars: Vec<usize>,
    pub engine: Engine,
}

impl Dataset {
    pub(crate) fn assemble(
        spec: GeneratorSpec,
        seed: u64,
        states: &[Vec<f64>],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let (engine, feature_vars) = spec.engine()?;
        if states.is_empty() {
            return Err(CadeError::Config("dataset needs at least one row".into()));
        }
        let y = engine.y_index();
        let names = engine.names();
        let mut features = Matrix::zeros(states.len(), feature_vars.len());
        let mut target = Vec::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            if s.len() != names.len() {
                return Err(CadeError::Shape("state length differs from engine".into()));
            }
            for (k, &v) in feature_vars.iter().enumerate() {
                features.set(i, k, s[v]);
            }
            target.push(s[y]);
        }
        if !features.is_finite() || target.iter().any(|v| !v.is_finite()) {
            return Err(CadeError::Numeric("generated non-finite values".into()));
        }
        Ok(Self {
            spec,
            seed,
            features,
            target,
            labels,
            column_names: feature_vars.iter().map(|&v| names[v].clone()).collect(),
            target_name: names[y].clone(),
            feature_vars,
            engine,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn p(&self) -> usize {
        self.features.cols()
    }

    /// Full engine state of row `i`: features scattered back plus the target.
    pub fn state(&self, i: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.engine.names().len()];
        s[self.engine.y_index()] = self.target[i];
        for (k, &v) in self.feature_vars.iter().enumerate() {
            s[v] = self.features.get(i, k);
        }
        s
    }

    /// Feature vector read off an engine state.
    pub fn features_of(&self, state: &[f64]) -> Vec<f64> {
        self.feature_vars.iter().map(|&v| state[v]).collect()
    }

    /// Feature column holding engine variable `var`.
    pub fn column_of_var(&self, var: usize) -> Option<usize> {
        self.feature_vars.iter().position(|&v| v == var)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Empirical `(min, max)` of every feature column.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.p())
            .map(|j| {
                self.features
                    .column(j)
                    .into_iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect()
    }

    /// Rows picked by index.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            ..self.clone()
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(CadeError::Config("n must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Variables ordered `(x1, y, x3, x2)`.
pub fn toy_scm(params: &ToyParams) -> Result<Scm> {
    let mut adj = vec![0.0; 16];
    adj[1] = params.a; // x1 -> y
    adj[4 + 3] = params.c; // y -> x2
    adj[2 * 4 + 3] = params.b; // x3 -> x2
    let graph = CausalGraph::new(4, adj)?;
    let sd = |std| NoiseSpec::Gaussian { mean: 0.0, std };
    Scm::linear(
        graph,
        vec![
            sd(params.sigma_1),
            sd(params.sigma_y),
            sd(params.sigma_3),
            sd(params.sigma_2),
        ],
        1,
        names(&["x1", "y", "x3", "x2"]),
    )
}

/// Variables ordered `(A, P1, P2, y, CP, C1, C2, D)`.
pub fn syn_measurement_scm() -> Result<Scm> {
    const A: usize = 0;
    const P1: usize = 1;
    const P2: usize = 2;
    const Y: usize = 3;
    const CP: usize = 4;
    const C1: usize = 5;
    const C2: usize = 6;
    const D: usize = 7;
    let edges = [
        (A, P1, 1.0),
        (A, P2, 1.0),
        (P1, Y, 1.0),
        (P2, Y, 1.0),
        (CP, C1, 1.0),
        (Y, C1, 4.0),
        (C1, C2, 1.0),
        (Y, C2, 1.0),
        (C1, D, 1.0),
        (C2, D, 1.0),
    ];
    let mut adj = vec![0.0; 64];
    for (i, j, w) in edges {
        adj[i * 8 + j] = w;
    }
    Scm::linear(
        CausalGraph::new(8, adj)?,
        vec![NoiseSpec::standard_normal(); 8],
        Y,
        names(&["A", "P1", "P2", "y", "CP", "C1", "C2", "D"]),
    )
}

/// Draw `n` exogenous vectors and push them through `scm`.
pub(crate) fn sample_states(scm: &Scm, n: usize, rng: &mut impl Rng) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    (0..n)
        .map(|_| {
            let u = scm.sample_exogenous(rng);
            Ok((scm.forward_sample(&u)?, u))
        })
        .collect()
}

pub fn gen_linear_toy(n: usize, params: ToyParams, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    params.validate()?;
    let scm = toy_scm(&params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<_> = sample_states(&scm, n, &mut rng)?.into_iter().map(|(x, _)| x).collect();
    Dataset::assemble(GeneratorSpec::LinearToy { params }, seed, &states, None)
}

pub fn gen_syn_measurement(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let scm = syn_measurement_scm()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<_> = sample_states(&scm, n, &mut rng)?.into_iter().map(|(x, _)| x).collect();
    Dataset::assemble(GeneratorSpec::SynMeasurement, seed, &states, None)
}

/// Pendulum latents with the default rendering-noise magnitude of 0.1 rad.
pub fn gen_pendulum_latent(n: usize, noise_fraction: f64, seed: u64) -> Result<Dataset> {
    gen_pendulum_with(n, noise_fraction, 0.1, seed)
}

pub fn gen_pendulum_with(
    n: usize,
    noise_fraction: f64,
    noise_magnitude: f64,
    seed: u64,
) -> Result<Dataset> {
    check_n(n)?;
    let spec = GeneratorSpec::Pendulum {
        noise_fraction,
        noise_magnitude,
    };
    spec.engine()?;
    let sim = PendulumSimulator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..=FRAC_PI_4), rng.random_range(FRAC_PI_4..=FRAC_PI_2)))
        .collect();
    let n_noisy = (noise_fraction * n as f64).round() as usize;
    let mut offsets = vec![0.0; n];
    let mut noisy: Vec<usize> = sample(&mut rng, n, n_noisy.min(n)).into_vec();
    noisy.sort_unstable();
    for i in noisy {
        offsets[i] = if noise_magnitude > 0.0 {
            rng.random_range(-noise_magnitude..noise_magnitude)
        } else {
            0.0
        };
    }
    let states: Vec<Vec<f64>> = angles
        .iter()
        .zip(&offsets)
        .map(|(&(y, z1), &off)| sim.render(y, y + off, z1).to_vec())
        .collect();
    let labels = angles
        .iter()
        .map(|&(y, _)| discretize_angle(y, PENDULUM_CLASSES))
        .collect::<Result<Vec<_>>>()?;
    Dataset::assemble(spec, seed, &states, Some(labels))
}
