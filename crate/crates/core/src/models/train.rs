//! Minibatch gradient descent, optionally on PGD adversarial examples.
//!
//! Features are standardized with training-set statistics before the first
//! step and the scaling is folded back into the input layer afterwards, so
//! the returned model consumes raw features. PGD runs in the standardized
//! space with per-coordinate budgets `epsilon / scale_j` and steps
//! `step_size / scale_j`, which is the raw-space max-norm attack expressed in
//! those coordinates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Arch, LinearModel, MlpModel, Model, Target, Task};
use crate::datasets::Dataset;
use crate::error::{CadeError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.03,
            steps: 10,
            step_size: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub adversarial: Option<AdversarialConfig>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Share of trailing rows held out for the validation loss.
    #[serde(default)]
    pub validation_fraction: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    /// Adam with bias correction, learning rate decayed linearly to
    /// `final_fraction` of its start over the run.
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_one")]
        final_fraction: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_one() -> f64 {
    1.0
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            final_fraction: 1.0,
        }
    }
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 0,
            task: Task::Regression,
            adversarial: None,
            standardize: true,
            validation_fraction: 0.0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CadeError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(CadeError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(CadeError::Config("validation_fraction must lie in [0, 1)".into()));
        }
        if let Task::Classification { n_classes } = self.task {
            if n_classes < 2 {
                return Err(CadeError::Config("classification needs at least two classes".into()));
            }
        }
        if let Optimizer::Adam { beta1, beta2, final_fraction } = self.optimizer {
            let unit = |b: f64| (0.0..1.0).contains(&b);
            if !unit(beta1) || !unit(beta2) || !(0.0..=1.0).contains(&final_fraction) {
                return Err(CadeError::Config("adam betas must lie in [0, 1) and final_fraction in [0, 1]".into()));
            }
        }
        if let Some(adv) = &self.adversarial {
            let ok = adv.epsilon.is_finite()
                && adv.epsilon >= 0.0
                && adv.step_size.is_finite()
                && adv.step_size >= 0.0;
            if !ok {
                return Err(CadeError::Config("adversarial epsilon and step must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Model,
    /// Mean clean loss on the training rows after the last epoch.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    /// Mean minibatch loss per epoch, on the examples actually trained on.
    pub history: Vec<f64>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projected sign-gradient ascent on the loss inside the box
/// `|x_adv_j - x_j| <= eps_j`, starting at `x`.
pub fn pgd_example(
    model: &Model,
    x: &[f64],
    target: Target,
    eps: &[f64],
    step: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let mut adv = x.to_vec();
    for _ in 0..steps {
        let (_, g) = model.loss_and_input_grad(&adv, target)?;
        for j in 0..adv.len() {
            let moved = adv[j] + step[j] * sign(g[j]);
            adv[j] = moved.clamp(x[j] - eps[j], x[j] + eps[j]);
        }
    }
    Ok(adv)
}

fn init_model(arch: &Arch, p: usize, task: Task, rng: &mut ChaCha8Rng) -> Result<Model> {
    match arch {
        Arch::Linear => {
            if task != Task::Regression {
                return Err(CadeError::Config("linear victims are regressors".into()));
            }
            let bound = 1.0 / (p as f64).sqrt();
            let w = (0..p).map(|_| rng.random_range(-bound..bound)).collect();
            let b = rng.random_range(-bound..bound);
            Ok(Model::Linear(LinearModel::new(w, Some(b))?))
        }
        Arch::Mlp { hidden, activation } => {
            let mut sizes = vec![p];
            sizes.extend(hidden);
            sizes.push(task.output_dim());
            Ok(Model::Mlp(MlpModel::init(&sizes, *activation, rng)?))
        }
    }
}

fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mean: Vec<f64> = (0..x.cols()).map(|j| x.column(j).iter().sum::<f64>() / n).collect();
    let scale = (0..x.cols())
        .map(|j| {
            let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn mean_loss(model: &Model, x: &Matrix, t: &[Target]) -> Result<f64> {
    let mut total = 0.0;
    for (row, &target) in x.iter_rows().zip(t) {
        total += model.loss(row, target)?;
    }
    Ok(total / t.len() as f64)
}

/// Train on an explicit feature matrix and target list.
pub fn train_on(arch: &Arch, x: &Matrix, targets: &[Target], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if x.rows() != targets.len() {
        return Err(CadeError::Shape(format!("{} rows, {} targets", x.rows(), targets.len())));
    }
    let n_valid = (cfg.validation_fraction * x.rows() as f64).round() as usize;
    let n_train = x.rows() - n_valid;
    if n_train == 0 || x.cols() == 0 {
        return Err(CadeError::Config("no training rows".into()));
    }
    let train_idx: Vec<usize> = (0..n_train).collect();
    let valid_idx: Vec<usize> = (n_train..x.rows()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(arch, x.cols(), cfg.task, &mut rng)?;

    let (mean, scale) = if cfg.standardize {
        column_stats(&x.select_rows(&train_idx))
    } else {
        (vec![0.0; x.cols()], vec![1.0; x.cols()])
    };
    let mut xs = x.clone();
    for i in 0..xs.rows() {
        for (j, v) in xs.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[j]) / scale[j];
        }
    }
    let (eps, step): (Vec<f64>, Vec<f64>) = match &cfg.adversarial {
        Some(a) => scale.iter().map(|s| (a.epsilon / s, a.step_size / s)).unzip(),
        None => (Vec::new(), Vec::new()),
    };

    let mut order = train_idx.clone();
    let mut grad = vec![0.0; model.n_params()];
    let mut m1 = vec![0.0; model.n_params()];
    let mut m2 = vec![0.0; model.n_params()];
    let total_steps = (cfg.epochs * n_train.div_ceil(cfg.batch_size)).max(1);
    let mut t = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let row = xs.row(i);
                let loss = match &cfg.adversarial {
                    Some(a) => {
                        let adv = pgd_example(&model, row, targets[i], &eps, &step, a.steps)?;
                        model.accumulate_param_grad(&adv, targets[i], &mut grad)?
                    }
                    None => model.accumulate_param_grad(row, targets[i], &mut grad)?,
                };
                epoch_loss += loss;
            }
            let mut theta = model.params();
            match cfg.optimizer {
                Optimizer::Sgd => {
                    let rate = cfg.learning_rate / batch.len() as f64;
                    for (p, g) in theta.iter_mut().zip(&grad) {
                        *p -= rate * g;
                    }
                }
                Optimizer::Adam {
                    beta1,
                    beta2,
                    final_fraction,
                } => {
                    let progress = t as f64 / total_steps as f64;
                    t += 1;
                    let lr = cfg.learning_rate * (1.0 - (1.0 - final_fraction) * progress);
                    let c1 = 1.0 - beta1.powi(t as i32);
                    let c2 = 1.0 - beta2.powi(t as i32);
                    let inv = 1.0 / batch.len() as f64;
                    for k in 0..theta.len() {
                        let g = grad[k] * inv;
                        m1[k] = beta1 * m1[k] + (1.0 - beta1) * g;
                        m2[k] = beta2 * m2[k] + (1.0 - beta2) * g * g;
                        theta[k] -= lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + 1e-8);
                    }
                }
            }
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(CadeError::Divergence {
                    epoch,
                    loss: f64::INFINITY,
                });
            }
            model.set_params(&theta)?;
        }
        let mean_epoch = epoch_loss / n_train as f64;
        if !mean_epoch.is_finite() {
            return Err(CadeError::Divergence {
                epoch,
                loss: mean_epoch,
            });
        }
        history.push(mean_epoch);
    }

    let train_loss = mean_loss(&model, &xs.select_rows(&train_idx), &targets[..n_train])?;
    let validation_loss = if n_valid > 0 {
        Some(mean_loss(&model, &xs.select_rows(&valid_idx), &targets[n_train..])?)
    } else {
        None
    };
    if cfg.standardize {
        model.fold_input_standardization(&mean, &scale);
    }
    Ok(Trained {
        model,
        train_loss,
        validation_loss,
        history,
    })
}

/// Standard or, when `cfg.adversarial` is set, PGD adversarial training.
pub fn train(arch: &Arch, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    let targets = cfg.task.targets(data)?;
    train_on(arch, &data.features, &targets, cfg)
}

/// Training where every minibatch is replaced by PGD examples first.
pub fn adversarial_train(arch: &Arch, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    if cfg.adversarial.is_none() {
        return Err(CadeError::Config("adversarial training needs a PGD config".into()));
    }
    train(arch, data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_linear_toy, gen_syn_measurement, ToyParams};
    use crate::models::{closed_form_toy_weights, Activation};

    fn rmse(model: &Model, x: &Matrix, y: &[f64]) -> f64 {
        let se: f64 = x
            .iter_rows()
            .zip(y)
            .map(|(r, t)| (model.predict_value(r) - t).powi(2))
            .sum();
        (se / y.len() as f64).sqrt()
    }

    fn mlp() -> Arch {
        Arch::Mlp {
            hidden: vec![32],
            activation: Activation::Relu,
        }
    }

    #[test]
    fn linear_gd_reaches_closed_form() {
        let ds = gen_linear_toy(20_000, ToyParams::default(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let out = train(&Arch::Linear, &ds, &cfg).unwrap();
        let Model::Linear(m) = &out.model else { panic!() };
        for (w, c) in m.weights.iter().zip(closed_form_toy_weights(&ToyParams::default())) {
            assert!((w - c).abs() < 0.02, "{w} vs {c}");
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = gen_syn_measurement(50, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            standardize: false,
            seed: 8,
            ..TrainConfig::default()
        };
        let out = train(&mlp(), &ds, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let init = MlpModel::init(&[7, 32, 1], Activation::Relu, &mut rng).unwrap();
        assert_eq!(out.model, Model::Mlp(init));
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_zero_epsilon_is_plain() {
        let ds = gen_syn_measurement(500, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&mlp(), &ds, &cfg).unwrap();
        let b = train(&mlp(), &ds, &cfg).unwrap();
        let bits = |m: &Model| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
        let adv_cfg = TrainConfig {
            adversarial: Some(AdversarialConfig {
                epsilon: 0.0,
                ..AdversarialConfig::default()
            }),
            ..cfg
        };
        let c = adversarial_train(&mlp(), &ds, &adv_cfg).unwrap();
        assert_eq!(bits(&a.model), bits(&c.model));
        assert_eq!(a.history, c.history);
    }

    #[test]
    fn mlp_fits_syn_measurement() {
        let train_ds = gen_syn_measurement(20_000, 3).unwrap();
        let test_ds = gen_syn_measurement(2_000, 4).unwrap();
        let cfg = TrainConfig {
            validation_fraction: 0.1,
            ..TrainConfig::default()
        };
        let out = train(&mlp(), &train_ds, &cfg).unwrap();
        assert!(out.validation_loss.is_some());
        let r = rmse(&out.model, &test_ds.features, &test_ds.target);
        assert!(r <= 1.2, "clean rmse {r}");
    }

    #[test]
    fn divergence_is_reported() {
        let ds = gen_syn_measurement(200, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e6,
            standardize: false,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mlp(), &ds, &cfg), Err(CadeError::Divergence { .. })));
    }

    #[test]
    fn pgd_stays_in_the_box() {
        let m = Model::Linear(LinearModel::new(vec![1.0, -2.0, 0.0], None).unwrap());
        let x = [0.5, 0.5, 0.5];
        let adv = pgd_example(&m, &x, Target::Real(0.0), &[0.1; 3], &[0.03; 3], 10).unwrap();
        // Residual is negative, so the loss grows by moving the prediction down.
        assert!((adv[0] - 0.4).abs() < 1e-12);
        assert!((adv[1] - 0.6).abs() < 1e-12);
        assert_eq!(adv[2], 0.5);
    }
}
