//! Linear regressors: the closed-form toy optimum and least-squares ERM.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{output_loss, Target};
use crate::datasets::{Dataset, ToyParams};
use crate::error::{CadeError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: Option<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: Option<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CadeError::Config("linear model needs at least one weight".into()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(CadeError::Numeric("non-finite linear parameter".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .fold(self.bias.unwrap_or(0.0), |acc, (w, v)| acc + w * v)
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + usize::from(self.bias.is_some())
    }

    /// Weights followed by the bias, when present.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend(self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(CadeError::Shape(format!(
                "linear model has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(CadeError::Numeric("non-finite linear parameter".into()));
        }
        let p = self.weights.len();
        self.weights.copy_from_slice(&params[..p]);
        if let Some(b) = self.bias.as_mut() {
            *b = params[p];
        }
        Ok(())
    }

    pub(crate) fn fold_input_standardization(&mut self, mean: &[f64], scale: &[f64]) {
        let mut shift = 0.0;
        for ((w, &m), &s) in self.weights.iter_mut().zip(mean).zip(scale) {
            *w /= s;
            shift += *w * m;
        }
        if let Some(b) = self.bias.as_mut() {
            *b -= shift;
        }
    }

    pub fn loss_and_input_grad(&self, x: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
        let (loss, delta) = output_loss(&[self.predict(x)], target)?;
        Ok((loss, self.weights.iter().map(|w| delta[0] * w).collect()))
    }

    pub fn accumulate_param_grad(&self, x: &[f64], target: Target, grad: &mut [f64]) -> Result<f64> {
        let (loss, delta) = output_loss(&[self.predict(x)], target)?;
        let p = self.weights.len();
        for (g, &v) in grad[..p].iter_mut().zip(x) {
            *g += delta[0] * v;
        }
        if self.bias.is_some() {
            grad[p] += delta[0];
        }
        Ok(loss)
    }
}

/// Population least-squares weights on `(x1, x2, x3)` for the toy process:
/// `[s2 a, sy c, -sy b c] / (s2 + sy c^2)` with `s2 = sigma_2^2`, `sy = sigma_y^2`.
pub fn closed_form_toy_weights(params: &ToyParams) -> [f64; 3] {
    let s2 = params.sigma_2 * params.sigma_2;
    let sy = params.sigma_y * params.sigma_y;
    let den = s2 + sy * params.c * params.c;
    [
        s2 * params.a / den,
        sy * params.c / den,
        -sy * params.b * params.c / den,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmFit {
    pub model: LinearModel,
    /// 2-norm condition number of the design matrix.
    pub condition_number: f64,
}

/// Least squares by Householder QR. `intercept` appends a column of ones.
pub fn least_squares(x: &Matrix, y: &[f64], intercept: bool) -> Result<ErmFit> {
    let (n, p) = (x.rows(), x.cols());
    let q = p + usize::from(intercept);
    if y.len() != n {
        return Err(CadeError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n < q || p == 0 {
        return Err(CadeError::Singular(format!("{n} rows cannot determine {q} coefficients")));
    }
    let design = DMatrix::from_fn(n, q, |i, j| if j < p { x.get(i, j) } else { 1.0 });
    let qr = design.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = smax / smin;
    if !(smin > smax * f64::EPSILON * n.max(q) as f64) {
        return Err(CadeError::Singular(format!("condition number {cond:e}")));
    }
    let mut rhs = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut rhs);
    let coef = r
        .solve_upper_triangular(&rhs.rows(0, q).into_owned())
        .ok_or_else(|| CadeError::Singular("zero pivot in R".into()))?;
    let weights = coef.iter().take(p).copied().collect();
    let bias = intercept.then(|| coef[p]);
    Ok(ErmFit {
        model: LinearModel::new(weights, bias)?,
        condition_number: cond,
    })
}

/// `w = argmin ||X w - y||^2` on the dataset's features, no intercept.
pub fn fit_linear_erm(data: &Dataset) -> Result<ErmFit> {
    least_squares(&data.features, &data.target, false)
}
