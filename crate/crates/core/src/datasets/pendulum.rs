//! Closed-form Pendulum simulator over the four latent factors.
//!
//! A pendulum of length `l_p` hangs from the pivot `(c_x, c_y)`; its ball sits
//! at `(c_x + l_p sin y, c_y - l_p cos y)`. A light at angle `z1` casts the
//! rod onto the ground line `b`. A point `(px, py)` lands at
//! `px - (py - b) / tan z1`, so the two shadow endpoints are
//!
//! ```text
//! ball  = c_x + l_p sin y - (c_y - l_p cos y - b) / tan z1
//! pivot = c_x - (c_y - b) / tan z1
//! ```
//!
//! and `shadow_length = ball - pivot = l_p (sin y + cos y / tan z1)`,
//! `shadow_position = (ball + pivot) / 2`. For `y in [0, pi/4]` and
//! `z1 in [pi/4, pi/2]` both terms of the length are nonnegative, so the ball
//! endpoint is always the right one and the length is the physical
//! right-minus-left extent; the closed forms are used exactly as given.
//!
//! Counterfactuals treat any mismatch between a stored shadow and the
//! projection of the stored angles as that shadow's additive exogenous
//! term, which is zero on rows rendered from the clean angle.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{CadeError, Result};
use crate::scm::{CausalGraph, CounterfactualEngine, InterventionMask};

pub const PENDULUM_ANGLE: usize = 0;
pub const LIGHT_ANGLE: usize = 1;
pub const SHADOW_LENGTH: usize = 2;
pub const SHADOW_POSITION: usize = 3;

pub const PENDULUM_NAMES: [&str; 4] =
    ["pendulum_angle", "light_angle", "shadow_length", "shadow_position"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumConstants {
    pub c_x: f64,
    pub c_y: f64,
    pub l_p: f64,
    pub b: f64,
}

impl Default for PendulumConstants {
    fn default() -> Self {
        Self {
            c_x: 10.0,
            c_y: 10.5,
            l_p: 9.5,
            b: -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSimulator {
    constants: PendulumConstants,
    graph: CausalGraph,
    names: Vec<String>,
    light_range: (f64, f64),
}

impl Default for PendulumSimulator {
    fn default() -> Self {
        Self::new(PendulumConstants::default())
    }
}

impl PendulumSimulator {
    pub fn new(constants: PendulumConstants) -> Self {
        let graph = CausalGraph::from_edges(
            4,
            &[
                (PENDULUM_ANGLE, SHADOW_LENGTH),
                (PENDULUM_ANGLE, SHADOW_POSITION),
                (LIGHT_ANGLE, SHADOW_LENGTH),
                (LIGHT_ANGLE, SHADOW_POSITION),
            ],
        )
        .expect("pendulum graph is acyclic");
        Self {
            constants,
            graph,
            names: PENDULUM_NAMES.map(String::from).to_vec(),
            light_range: (FRAC_PI_4, FRAC_PI_2),
        }
    }

    pub fn constants(&self) -> PendulumConstants {
        self.constants
    }

    /// Light angles the simulator can render; intervened values are clipped here.
    pub fn light_range(&self) -> (f64, f64) {
        self.light_range
    }

    fn endpoints(&self, angle: f64, light: f64) -> (f64, f64) {
        let PendulumConstants { c_x, c_y, l_p, b } = self.constants;
        let t = light.tan();
        let ball = (c_x + l_p * angle.sin()) - (c_y - l_p * angle.cos() - b) / t;
        let pivot = c_x - (c_y - b) / t;
        (ball, pivot)
    }

    pub fn shadow_length(&self, angle: f64, light: f64) -> f64 {
        let (ball, pivot) = self.endpoints(angle, light);
        ball - pivot
    }

    pub fn shadow_position(&self, angle: f64, light: f64) -> f64 {
        let (ball, pivot) = self.endpoints(angle, light);
        (ball + pivot) / 2.0
    }

    /// Full latent vector rendered from `angle` and `light`, labelled with `label_angle`.
    pub fn render(&self, label_angle: f64, render_angle: f64, light: f64) -> [f64; 4] {
        [
            label_angle,
            light,
            self.shadow_length(render_angle, light),
            self.shadow_position(render_angle, light),
        ]
    }
}

impl CounterfactualEngine for PendulumSimulator {
    fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    fn y_index(&self) -> usize {
        PENDULUM_ANGLE
    }

    fn names(&self) -> &[String] {
        &self.names
    }

    fn counterfactual(
        &self,
        x: &[f64],
        x_prime: &[f64],
        mask: &InterventionMask,
    ) -> Result<Vec<f64>> {
        if x.len() != 4 || x_prime.len() != 4 || mask.len() != 4 {
            return Err(CadeError::Shape("pendulum state has four coordinates".into()));
        }
        if x.iter().chain(x_prime).any(|v| !v.is_finite()) {
            return Err(CadeError::Range("pendulum state must be finite".into()));
        }
        let mut out = x.to_vec();
        if mask.contains(PENDULUM_ANGLE) {
            out[PENDULUM_ANGLE] = x_prime[PENDULUM_ANGLE];
        }
        if mask.contains(LIGHT_ANGLE) {
            let (lo, hi) = self.light_range;
            out[LIGHT_ANGLE] = x_prime[LIGHT_ANGLE].clamp(lo, hi);
        }
        let parents_moved = mask.contains(PENDULUM_ANGLE) || mask.contains(LIGHT_ANGLE);
        if parents_moved {
            let u_len = x[SHADOW_LENGTH] - self.shadow_length(x[PENDULUM_ANGLE], x[LIGHT_ANGLE]);
            let u_pos =
                x[SHADOW_POSITION] - self.shadow_position(x[PENDULUM_ANGLE], x[LIGHT_ANGLE]);
            out[SHADOW_LENGTH] =
                self.shadow_length(out[PENDULUM_ANGLE], out[LIGHT_ANGLE]) + u_len;
            out[SHADOW_POSITION] =
                self.shadow_position(out[PENDULUM_ANGLE], out[LIGHT_ANGLE]) + u_pos;
        }
        if mask.contains(SHADOW_LENGTH) {
            out[SHADOW_LENGTH] = x_prime[SHADOW_LENGTH];
        }
        if mask.contains(SHADOW_POSITION) {
            out[SHADOW_POSITION] = x_prime[SHADOW_POSITION];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(CadeError::Numeric("pendulum projection overflowed".into()));
        }
        Ok(out)
    }
}

/// Uniform binning of `[0, pi/4]`; bins are half-open except the last.
pub fn discretize_angle(y: f64, n_bins: usize) -> Result<usize> {
    if n_bins == 0 {
        return Err(CadeError::Config("need at least one bin".into()));
    }
    if !(0.0..=FRAC_PI_4).contains(&y) {
        return Err(CadeError::Range(format!("pendulum angle {y} outside [0, pi/4]")));
    }
    let bin = ((y / FRAC_PI_4) * n_bins as f64).floor() as usize;
    Ok(bin.min(n_bins - 1))
}
