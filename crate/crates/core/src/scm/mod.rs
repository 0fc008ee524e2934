//! Structural causal models: graphs, invertible mechanisms, abduction and
//! counterfactual generation.

mod graph;
mod io;
mod model;
mod transform;

use std::collections::BTreeSet;

pub use graph::{markov_blanket, CausalGraph};
pub use io::{load_scm, save_scm, ScmDocument};
pub use model::{NoiseSpec, Scm};
pub use transform::PiecewiseLinear;

use crate::error::{CadeError, Result};

/// Binary vector selecting the intervened variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionMask {
    mask: Vec<bool>,
}

impl InterventionMask {
    pub fn empty(d: usize) -> Self {
        Self { mask: vec![false; d] }
    }

    pub fn from_indices(d: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; d];
        for i in indices {
            if i >= d {
                return Err(CadeError::Config(format!("intervened index {i} outside 0..{d}")));
            }
            mask[i] = true;
        }
        Ok(Self { mask })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    /// The intervened set S.
    pub fn indices(&self) -> BTreeSet<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }
}

/// Anything that can answer "what would this observation have looked like
/// had the variables in the mask taken these values".
///
/// Implemented by [`Scm`] and by the closed-form Pendulum simulator.
pub trait CounterfactualEngine: Send + Sync {
    fn graph(&self) -> &CausalGraph;

    fn y_index(&self) -> usize;

    fn names(&self) -> &[String];

    /// Counterfactual of the factual `x` under the intervention that holds
    /// the masked coordinates at their values in `x_prime`.
    fn counterfactual(
        &self,
        x: &[f64],
        x_prime: &[f64],
        mask: &InterventionMask,
    ) -> Result<Vec<f64>>;

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }
}
