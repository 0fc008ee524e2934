//! Per-example attack search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Attack, FeatureSpace, Mode};
use crate::error::{CadeError, Result};
use crate::models::{pgd_example, Model, Target};

fn checked_loss(model: &Model, feats: &[f64], y: Target) -> Result<(f64, Vec<f64>)> {
    let (loss, g) = model.loss_and_input_grad(feats, y)?;
    if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(CadeError::Numeric(format!("attack loss is not finite ({loss})")));
    }
    Ok((loss, g))
}

fn clamp_to_budget(x: &[f64], proposal: &mut [f64], attack: &Attack) {
    for v in attack.mask.indices() {
        let e = attack.eps[v];
        proposal[v] = x[v] + (proposal[v] - x[v]).clamp(-e, e);
    }
}

fn gradient_search(
    model: &Model,
    space: &FeatureSpace,
    x: &[f64],
    y: Target,
    attack: &Attack,
    propagate: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut adv = x.to_vec();
    let mut losses = vec![checked_loss(model, &space.features(&adv), y)?.0];
    for _ in 0..attack.steps {
        let (_, g) = checked_loss(model, &space.features(&adv), y)?;
        let mut proposal = adv.clone();
        // Only intervened coordinates move; the rest of the gradient is dropped.
        for (k, &v) in space.feature_vars.iter().enumerate() {
            if attack.mask.contains(v) {
                proposal[v] += attack.step_size * g[k];
            }
        }
        clamp_to_budget(x, &mut proposal, attack);
        adv = if propagate {
            space.engine.counterfactual(x, &proposal, &attack.mask)?
        } else {
            proposal
        };
        losses.push(checked_loss(model, &space.features(&adv), y)?.0);
    }
    Ok((adv, losses))
}

fn random_search(space: &FeatureSpace, x: &[f64], attack: &Attack, rng: &mut impl Rng, propagate: bool) -> Result<Vec<f64>> {
    let mut proposal = x.to_vec();
    for v in attack.mask.indices() {
        let e = attack.eps[v];
        if e > 0.0 {
            proposal[v] = x[v] + rng.random_range(-e..=e);
        }
    }
    if propagate {
        space.engine.counterfactual(x, &proposal, &attack.mask)
    } else {
        Ok(proposal)
    }
}

/// CADE white-box attack on the engine state `x` with label `y`.
pub fn cade_whitebox(model: &Model, space: &FeatureSpace, x: &[f64], y: Target, attack: &Attack) -> Result<Vec<f64>> {
    Ok(cade_whitebox_trace(model, space, x, y, attack)?.0)
}

/// As [`cade_whitebox`], also returning the loss before the first step and
/// after every step.
pub fn cade_whitebox_trace(
    model: &Model,
    space: &FeatureSpace,
    x: &[f64],
    y: Target,
    attack: &Attack,
) -> Result<(Vec<f64>, Vec<f64>)> {
    gradient_search(model, space, x, y, attack, true)
}

/// Query-free intervention: uniform draw in the budget box, then propagation.
pub fn cade_random(space: &FeatureSpace, x: &[f64], attack: &Attack, rng: &mut impl Rng) -> Result<Vec<f64>> {
    random_search(space, x, attack, rng, true)
}

/// The matching intervention search without consequence propagation:
/// gradient search when a victim is given, a random draw otherwise.
pub fn perturb_baseline(
    model: Option<&Model>,
    space: &FeatureSpace,
    x: &[f64],
    y: Target,
    attack: &Attack,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    match model {
        Some(m) => Ok(gradient_search(m, space, x, y, attack, false)?.0),
        None => random_search(space, x, attack, rng, false),
    }
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

/// One signed-gradient step of size `eps` on every feature.
pub fn fgsm(model: &Model, x: &[f64], y: Target, eps: f64) -> Result<Vec<f64>> {
    let (_, g) = checked_loss(model, x, y)?;
    Ok(x.iter().zip(&g).map(|(v, gi)| v + eps * sign(*gi)).collect())
}

/// Projected signed-gradient ascent in the `eps` max-norm ball on every feature.
pub fn pgd(model: &Model, x: &[f64], y: Target, eps: f64, step: f64, steps: usize) -> Result<Vec<f64>> {
    checked_loss(model, x, y)?;
    let p = x.len();
    pgd_example(model, x, y, &vec![eps; p], &vec![step; p], steps)
}

/// Attack every state, in parallel. Example `i` draws from stream `i` of
/// the attack seed, so results do not depend on scheduling.
pub fn run_attack(
    model: Option<&Model>,
    space: &FeatureSpace,
    states: &[Vec<f64>],
    targets: &[Target],
    attack: &Attack,
) -> Result<Vec<Vec<f64>>> {
    if states.len() != targets.len() {
        return Err(CadeError::Shape("states and targets differ in length".into()));
    }
    let needs_model = matches!(attack.mode, Mode::Whitebox | Mode::Fgsm | Mode::Pgd);
    if needs_model && model.is_none() {
        return Err(CadeError::Config(format!("{:?} attack needs a victim", attack.mode)));
    }
    states
        .par_iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (x, &y))| {
            let mut rng = ChaCha8Rng::seed_from_u64(attack.seed);
            rng.set_stream(i as u64);
            match attack.mode {
                Mode::Whitebox => cade_whitebox(model.unwrap(), space, x, y, attack),
                Mode::Random => cade_random(space, x, attack, &mut rng),
                Mode::Perturbation => perturb_baseline(model, space, x, y, attack, &mut rng),
                Mode::Fgsm | Mode::Pgd => {
                    let m = model.unwrap();
                    let e = attack.eps[space.feature_vars[0]];
                    let feats = space.features(x);
                    let moved = if attack.mode == Mode::Fgsm {
                        fgsm(m, &feats, y, e)?
                    } else {
                        pgd(m, &feats, y, e, attack.step_size, attack.steps)?
                    };
                    let mut out = x.clone();
                    for (k, &v) in space.feature_vars.iter().enumerate() {
                        out[v] = moved[k];
                    }
                    Ok(out)
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackConfig;
    use crate::datasets::{gen_linear_toy, gen_syn_measurement, Dataset, ToyParams};
    use crate::models::{closed_form_toy_weights, Arch, LinearModel, TrainConfig};
    use crate::scm::CounterfactualEngine;
    use proptest::prelude::*;

    fn toy() -> (Dataset, Model) {
        let ds = gen_linear_toy(200, ToyParams::default(), 7).unwrap();
        let w = closed_form_toy_weights(&ToyParams::default()).to_vec();
        (ds, Model::Linear(LinearModel::new(w, None).unwrap()))
    }

    fn attack(ds: &Dataset, mode: Mode, s: &[&str], eps: f64) -> Attack {
        AttackConfig::new(mode, s, eps).resolve(&ds.engine, None).unwrap()
    }

    #[test]
    fn zero_budget_is_identity() {
        let (ds, m) = toy();
        let sp = FeatureSpace::of(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..20 {
            let x = ds.state(i);
            let y = Target::Real(ds.target[i]);
            let a = attack(&ds, Mode::Whitebox, &["x2", "x3"], 0.0);
            assert_eq!(cade_whitebox(&m, &sp, &x, y, &a).unwrap(), x);
            assert_eq!(cade_random(&sp, &x, &a, &mut rng).unwrap(), x);
            let feats = sp.features(&x);
            assert_eq!(fgsm(&m, &feats, y, 0.0).unwrap(), feats);
            assert_eq!(pgd(&m, &feats, y, 0.0, 0.01, 10).unwrap(), feats);
        }
    }

    #[test]
    fn child_attack_shift_and_monotone_loss() {
        let (ds, m) = toy();
        let sp = FeatureSpace::of(&ds);
        let w2 = closed_form_toy_weights(&ToyParams::default())[1];
        for eps in [0.1, 1.0, 10.0] {
            let a = attack(&ds, Mode::Whitebox, &["x2"], eps);
            for i in 0..100 {
                let x = ds.state(i);
                let (adv, losses) = cade_whitebox_trace(&m, &sp, &x, Target::Real(ds.target[i]), &a).unwrap();
                assert!(losses.windows(2).all(|w| w[1] >= w[0]));
                let delta = adv[3] - x[3];
                assert!(delta.abs() <= eps + 1e-12);
                let shift = m.predict_value(&sp.features(&adv)) - m.predict_value(&sp.features(&x));
                assert!((shift - w2 * delta).abs() < 1e-9);
                // Only the child moves.
                assert_eq!(&adv[..3], &x[..3]);
            }
        }
    }

    #[test]
    fn coparent_attack_cancels_but_its_perturbation_does_not() {
        let (ds, m) = toy();
        let sp = FeatureSpace::of(&ds);
        let w3 = closed_form_toy_weights(&ToyParams::default())[2];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for eps in [0.1, 1.0, 10.0] {
            let a = attack(&ds, Mode::Whitebox, &["x3"], eps);
            let p = attack(&ds, Mode::Perturbation, &["x3"], eps);
            for i in 0..100 {
                let x = ds.state(i);
                let y = Target::Real(ds.target[i]);
                let clean = m.predict_value(&sp.features(&x));
                let adv = cade_whitebox(&m, &sp, &x, y, &a).unwrap();
                assert!((m.predict_value(&sp.features(&adv)) - clean).abs() < 1e-9);
                let rnd = cade_random(&sp, &x, &a, &mut rng).unwrap();
                assert!((m.predict_value(&sp.features(&rnd)) - clean).abs() < 1e-9);
                let per = perturb_baseline(None, &sp, &x, y, &p, &mut rng).unwrap();
                let eta = per[2] - x[2];
                let shift = m.predict_value(&sp.features(&per)) - clean;
                assert!((shift - w3 * eta).abs() < 1e-9);
                assert_eq!(per[3], x[3]);
            }
        }
    }

    #[test]
    fn perturbation_matches_intervention_without_descendants() {
        let ds = gen_syn_measurement(50, 1).unwrap();
        let m = crate::models::train(&Arch::Linear, &ds, &TrainConfig { epochs: 2, ..TrainConfig::default() })
            .unwrap()
            .model;
        let sp = FeatureSpace::of(&ds);
        let a = attack(&ds, Mode::Whitebox, &["D"], 0.3);
        let p = attack(&ds, Mode::Perturbation, &["D"], 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..20 {
            let x = ds.state(i);
            let y = Target::Real(ds.target[i]);
            assert_eq!(
                cade_whitebox(&m, &sp, &x, y, &a).unwrap(),
                perturb_baseline(Some(&m), &sp, &x, y, &p, &mut rng).unwrap()
            );
        }
    }

    #[test]
    fn fgsm_on_linear_victim() {
        let m = Model::Linear(LinearModel::new(vec![0.5, -2.0, 0.0], Some(0.1)).unwrap());
        let x = [1.0, 1.0, 1.0];
        // Prediction -1.4 above target -3: residual positive.
        let adv = fgsm(&m, &x, Target::Real(-3.0), 0.2).unwrap();
        assert_eq!(adv, vec![1.2, 0.8, 1.0]);
    }

    #[test]
    fn pgd_dominates_fgsm() {
        let ds = gen_syn_measurement(2_000, 2).unwrap();
        let arch = Arch::Mlp { hidden: vec![32], activation: Default::default() };
        let m = crate::models::train(&arch, &ds, &TrainConfig { epochs: 5, ..TrainConfig::default() })
            .unwrap()
            .model;
        let mut wins = 0;
        for i in 0..200 {
            let x = ds.features.row(i);
            let y = Target::Real(ds.target[i]);
            let lf = m.loss(&fgsm(&m, x, y, 0.1).unwrap(), y).unwrap();
            let lp = m.loss(&pgd(&m, x, y, 0.1, 0.01, 10).unwrap(), y).unwrap();
            if lp >= lf - 1e-12 {
                wins += 1;
            }
        }
        assert!(wins >= 180, "pgd won {wins}/200");
    }

    #[test]
    fn run_attack_is_deterministic_and_checks_victim() {
        let (ds, m) = toy();
        let sp = FeatureSpace::of(&ds);
        let states: Vec<_> = (0..50).map(|i| ds.state(i)).collect();
        let targets: Vec<_> = ds.target[..50].iter().map(|&t| Target::Real(t)).collect();
        let a = attack(&ds, Mode::Random, &["x2", "x3"], 0.5);
        let r1 = run_attack(None, &sp, &states, &targets, &a).unwrap();
        let r2 = run_attack(None, &sp, &states, &targets, &a).unwrap();
        assert_eq!(r1, r2);
        let w = attack(&ds, Mode::Whitebox, &["x2"], 0.5);
        assert!(matches!(run_attack(None, &sp, &states, &targets, &w), Err(CadeError::Config(_))));
        let out = run_attack(Some(&m), &sp, &states, &targets, &w).unwrap();
        assert_eq!(out.len(), 50);
    }

    proptest! {
        #[test]
        fn budget_and_support_invariants(
            seed in 0u64..1000,
            eps in 0.0f64..2.0,
            set in prop::sample::subsequence(vec!["CP", "C1", "C2", "D"], 1..4),
            mode in prop::sample::select(vec![Mode::Whitebox, Mode::Random, Mode::Perturbation]),
        ) {
            let ds = gen_syn_measurement(5, seed).unwrap();
            let w: Vec<f64> = (0..7).map(|k| ((k as f64) * 0.37).sin()).collect();
            let m = Model::Linear(LinearModel::new(w, None).unwrap());
            let sp = FeatureSpace::of(&ds);
            let a = AttackConfig { seed, ..AttackConfig::new(mode, &set, eps) }
                .resolve(&ds.engine, None)
                .unwrap();
            let states: Vec<_> = (0..5).map(|i| ds.state(i)).collect();
            let targets: Vec<_> = ds.target.iter().map(|&t| Target::Real(t)).collect();
            let out = run_attack(Some(&m), &sp, &states, &targets, &a).unwrap();
            let s = a.mask.indices();
            let reach = ds.engine.graph().descendants_of_set(&s);
            for (x, adv) in states.iter().zip(&out) {
                for v in 0..8 {
                    let moved = adv[v] != x[v];
                    if s.contains(&v) {
                        prop_assert!((adv[v] - x[v]).abs() <= eps + 1e-12);
                    } else if mode == Mode::Perturbation {
                        prop_assert!(!moved);
                    } else if !reach.contains(&v) {
                        prop_assert!(!moved);
                    }
                }
            }
        }
    }
}
