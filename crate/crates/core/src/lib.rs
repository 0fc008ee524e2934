//! Counterfactual adversarial examples over structural causal models.
//!
//! The crate is organised bottom-up:
//!
//! - [`scm`]: weighted DAGs, invertible piecewise-linear mechanisms,
//!   abduction and the masked action-prediction update.
//! - [`datasets`]: the linear toy process, SynMeasurement and the Pendulum
//!   latent simulator.
//! - [`models`]: linear and MLP victims with exact input gradients,
//!   standard and PGD adversarial training.
//! - [`attacks`]: white-box and random intervention attacks, the
//!   perturbation ablation, FGSM/PGD baselines and evaluation.
//! - [`props`]: exact enumeration checks of the Markov-blanket and
//!   intervention-invariance results on small discrete SCMs.
//! - [`harness`]: experiment configs, campaigns, sweeps and reports.

pub mod attacks;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod models;
pub mod props;
pub mod scm;

pub use error::{CadeError, Result};
