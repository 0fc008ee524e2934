//! Victim models: linear regressors and MLPs with exact input and parameter
//! gradients, plain and PGD-adversarial minibatch training, and JSON
//! checkpoints.

mod checkpoint;
mod linear;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_model, save_model, ModelDocument, MODEL_FORMAT, MODEL_VERSION};
pub use linear::{closed_form_toy_weights, fit_linear_erm, least_squares, ErmFit, LinearModel};
pub use mlp::{Activation, MlpModel};
pub use train::{
    adversarial_train, pgd_example, train, train_on, AdversarialConfig, Optimizer, TrainConfig, Trained,
};

use crate::datasets::Dataset;
use crate::error::{CadeError, Result};

/// Supervision for one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Real(f64),
    Class(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Task {
    #[default]
    Regression,
    Classification { n_classes: usize },
}

impl Task {
    pub fn output_dim(&self) -> usize {
        match *self {
            Task::Regression => 1,
            Task::Classification { n_classes } => n_classes,
        }
    }

    /// Per-row targets of `data` for this task.
    pub fn targets(&self, data: &Dataset) -> Result<Vec<Target>> {
        match *self {
            Task::Regression => Ok(data.target.iter().map(|&y| Target::Real(y)).collect()),
            Task::Classification { n_classes } => {
                let labels = data
                    .labels
                    .as_ref()
                    .ok_or_else(|| CadeError::Config("dataset has no class labels".into()))?;
                if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
                    return Err(CadeError::Config(format!("label {bad} with {n_classes} classes")));
                }
                Ok(labels.iter().map(|&l| Target::Class(l)).collect())
            }
        }
    }
}

/// Architecture to build before training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Arch {
    Linear,
    Mlp {
        hidden: Vec<usize>,
        #[serde(default)]
        activation: Activation,
    },
}

/// Loss at the model output and its gradient with respect to the output.
///
/// Squared error for real targets, softmax cross-entropy for classes.
pub(crate) fn output_loss(out: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
    match target {
        Target::Real(y) => {
            if out.len() != 1 {
                return Err(CadeError::Shape(format!(
                    "regression needs one output, model has {}",
                    out.len()
                )));
            }
            let r = out[0] - y;
            Ok((r * r, vec![2.0 * r]))
        }
        Target::Class(k) => {
            if k >= out.len() {
                return Err(CadeError::Shape(format!("class {k} with {} logits", out.len())));
            }
            let m = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = out.iter().map(|&o| (o - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            let loss = z.ln() + m - out[k];
            let mut delta: Vec<f64> = exps.iter().map(|e| e / z).collect();
            delta[k] -= 1.0;
            Ok((loss, delta))
        }
    }
}

/// Index of the largest logit; ties go to the smaller index.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.input_dim(),
            Model::Mlp(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Linear(_) => 1,
            Model::Mlp(m) => m.output_dim(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Linear(m) => vec![m.predict(x)],
            Model::Mlp(m) => m.forward(x),
        }
    }

    /// Scalar prediction of a regression model.
    pub fn predict_value(&self, x: &[f64]) -> f64 {
        self.forward(x)[0]
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x))
    }

    pub fn loss(&self, x: &[f64], target: Target) -> Result<f64> {
        Ok(output_loss(&self.forward(x), target)?.0)
    }

    /// Loss and its exact gradient with respect to the input.
    pub fn loss_and_input_grad(&self, x: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.input_dim() {
            return Err(CadeError::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        match self {
            Model::Linear(m) => m.loss_and_input_grad(x, target),
            Model::Mlp(m) => m.loss_and_input_grad(x, target),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_params(),
            Model::Mlp(m) => m.n_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Model::Linear(m) => m.params(),
            Model::Mlp(m) => m.params(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        match self {
            Model::Linear(m) => m.set_params(params),
            Model::Mlp(m) => m.set_params(params),
        }
    }

    /// Adds the gradient of the loss with respect to the parameters, in
    /// [`params`](Self::params) order, into `grad`; returns the loss.
    pub fn accumulate_param_grad(&self, x: &[f64], target: Target, grad: &mut [f64]) -> Result<f64> {
        match self {
            Model::Linear(m) => m.accumulate_param_grad(x, target, grad),
            Model::Mlp(m) => m.accumulate_param_grad(x, target, grad),
        }
    }

    pub(crate) fn fold_input_standardization(&mut self, mean: &[f64], scale: &[f64]) {
        match self {
            Model::Linear(m) => m.fold_input_standardization(mean, scale),
            Model::Mlp(m) => m.fold_input_standardization(mean, scale),
        }
    }
}
