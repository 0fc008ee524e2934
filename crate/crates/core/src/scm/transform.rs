//! Monotone piecewise-linear elementwise transforms.
//!
//! With breakpoints `b_0 < ... < b_{K-1}` and slopes `s_0, ..., s_K` the map is
//!
//! ```text
//! f(v) = s_0 * v + sum_k (s_{k+1} - s_k) * max(0, v - b_k)
//! ```
//!
//! so it is continuous, has slope `s_k` on the k-th segment and extrapolates
//! with the boundary slopes on both ends. All slopes are strictly positive,
//! which makes `f` a bijection of the real line. `K = 0, s_0 = 1` is the
//! identity, and in that case `eval` and `invert` return their input bitwise.

use serde::{Deserialize, Serialize};

use crate::error::{CadeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformDoc", into = "TransformDoc")]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    /// `f(b_k)`, cached for inversion.
    knot_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformDoc {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
}

impl TryFrom<TransformDoc> for PiecewiseLinear {
    type Error = CadeError;

    fn try_from(doc: TransformDoc) -> Result<Self> {
        PiecewiseLinear::new(doc.breakpoints, doc.slopes)
    }
}

impl From<PiecewiseLinear> for TransformDoc {
    fn from(t: PiecewiseLinear) -> Self {
        TransformDoc {
            breakpoints: t.breakpoints,
            slopes: t.slopes,
        }
    }
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(CadeError::Config(format!(
                "{} breakpoints need {} slopes, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                slopes.len()
            )));
        }
        if breakpoints.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(CadeError::Numeric("transform parameters must be finite".into()));
        }
        if slopes.iter().any(|&s| s <= 0.0) {
            return Err(CadeError::Config("transform slopes must be strictly positive".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CadeError::Config("breakpoints must be strictly increasing".into()));
        }
        let mut t = Self {
            breakpoints,
            slopes,
            knot_values: Vec::new(),
        };
        t.knot_values = t.breakpoints.iter().map(|&b| t.eval_raw(b)).collect();
        Ok(t)
    }

    pub fn identity() -> Self {
        Self {
            breakpoints: Vec::new(),
            slopes: vec![1.0],
            knot_values: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.breakpoints.is_empty() && self.slopes[0] == 1.0
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    fn eval_raw(&self, v: f64) -> f64 {
        let mut out = self.slopes[0] * v;
        for (k, &b) in self.breakpoints.iter().enumerate() {
            if v > b {
                out += (self.slopes[k + 1] - self.slopes[k]) * (v - b);
            }
        }
        out
    }

    /// Forward map. Errors only on non-finite input or output.
    pub fn eval(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(CadeError::Range(format!("cannot transform non-finite value {v}")));
        }
        if self.is_identity() {
            return Ok(v);
        }
        let out = self.eval_raw(v);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(CadeError::Numeric(format!("transform overflowed at {v}")))
        }
    }

    /// Exact inverse of [`eval`](Self::eval).
    pub fn invert(&self, w: f64) -> Result<f64> {
        if !w.is_finite() {
            return Err(CadeError::Range(format!("cannot invert non-finite value {w}")));
        }
        if self.is_identity() {
            return Ok(w);
        }
        let v = if self.breakpoints.is_empty() {
            w / self.slopes[0]
        } else {
            // Largest knot with f(b_k) <= w selects segment k + 1.
            match self.knot_values.partition_point(|&fk| fk <= w) {
                0 => self.breakpoints[0] + (w - self.knot_values[0]) / self.slopes[0],
                k => self.breakpoints[k - 1] + (w - self.knot_values[k - 1]) / self.slopes[k],
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CadeError::Numeric(format!("inverse transform overflowed at {w}")))
        }
    }
}

impl Default for PiecewiseLinear {
    fn default() -> Self {
        Self::identity()
    }
}
