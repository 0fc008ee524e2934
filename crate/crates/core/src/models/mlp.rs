//! Dense feedforward networks with hand-written reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{output_loss, Target};
use crate::error::{CadeError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Layers `sizes[0] -> sizes[1] -> ... -> sizes[L]`, activation after every
/// hidden layer and an affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    /// `weights[l]` is `sizes[l + 1] x sizes[l]`.
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

struct Tape {
    /// Inputs to every layer, `acts[0] = x`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(CadeError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
            biases.push((0..fan_out).map(|_| rng.random_range(-bound..bound)).collect());
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: &[f64]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(CadeError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut m = Self {
            sizes: sizes.to_vec(),
            weights: sizes.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect(),
            biases: sizes.windows(2).map(|w| vec![0.0; w[1]]).collect(),
            activation,
        };
        m.set_params(params)?;
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(CadeError::Shape(format!(
                "mlp has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(CadeError::Numeric("non-finite mlp parameter".into()));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let nw = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = b.len();
            b.copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Rescale the input layer so that the network consumes raw features
    /// instead of `(x - mean) / scale`.
    pub(crate) fn fold_input_standardization(&mut self, mean: &[f64], scale: &[f64]) {
        let w = &mut self.weights[0];
        for o in 0..w.rows() {
            let mut shift = 0.0;
            for (j, (&m, &s)) in mean.iter().zip(scale).enumerate() {
                let v = w.get(o, j) / s;
                w.set(o, j, v);
                shift += v * m;
            }
            self.biases[0][o] -= shift;
        }
    }

    fn affine(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let w = &self.weights[l];
        (0..w.rows())
            .map(|o| {
                w.row(o)
                    .iter()
                    .zip(input)
                    .fold(self.biases[l][o], |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    fn run(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        let last = self.weights.len() - 1;
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.weights.len());
        for l in 0..=last {
            let z = self.affine(l, &acts[l]);
            if l < last {
                acts.push(z.iter().map(|&v| self.activation.apply(v)).collect());
            }
            pre.push(z);
        }
        let out = pre[last].clone();
        (out, Tape { acts, pre })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).0
    }

    /// Back-propagate `delta = dL/d(output)`; optionally accumulate
    /// parameter gradients and return the input gradient.
    fn backward(&self, tape: &Tape, mut delta: Vec<f64>, mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let start = *acc;
                *acc += w[1] * (w[0] + 1);
                Some(start)
            })
            .collect();
        for l in (0..self.weights.len()).rev() {
            let w = &self.weights[l];
            let input = &tape.acts[l];
            if let Some(g) = grad.as_deref_mut() {
                let base = offsets[l];
                let nw = w.rows() * w.cols();
                for (o, &d) in delta.iter().enumerate() {
                    let row = &mut g[base + o * w.cols()..base + (o + 1) * w.cols()];
                    for (gi, &a) in row.iter_mut().zip(input) {
                        *gi += d * a;
                    }
                    g[base + nw + o] += d;
                }
            }
            let mut back = vec![0.0; w.cols()];
            for (o, &d) in delta.iter().enumerate() {
                for (b, &wv) in back.iter_mut().zip(w.row(o)) {
                    *b += wv * d;
                }
            }
            if l > 0 {
                for (b, &z) in back.iter_mut().zip(&tape.pre[l - 1]) {
                    *b *= self.activation.derivative(z);
                }
            }
            delta = back;
        }
        delta
    }

    pub fn loss_and_input_grad(&self, x: &[f64], target: Target) -> Result<(f64, Vec<f64>)> {
        let (out, tape) = self.run(x);
        let (loss, delta) = output_loss(&out, target)?;
        Ok((loss, self.backward(&tape, delta, None)))
    }

    /// Adds the parameter gradient into `grad` and returns the loss.
    pub fn accumulate_param_grad(&self, x: &[f64], target: Target, grad: &mut [f64]) -> Result<f64> {
        let (out, tape) = self.run(x);
        let (loss, delta) = output_loss(&out, target)?;
        self.backward(&tape, delta, Some(grad));
        Ok(loss)
    }
}
