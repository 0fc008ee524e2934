//! Exact enumeration checks on small discrete SCMs: conditionals reduce to
//! the Markov blanket, co-parent mechanism changes leave `p(y | x)` alone
//! while child changes do not, and a conditional shift behind a latent
//! layer needs a shifted latent marginal.

mod checks;
mod discrete;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

pub use checks::{
    check_prop_31, check_prop_32, check_prop_33, conditional_gap, parent_config_index, role_of,
    FunctionalMechanism, Intervention, Prop32Outcome, Prop33Record, Role, TwoLevelScm, TV_ZERO,
};
pub use discrete::{
    conditional_y_given, enumerate_joint, total_variation, ConditionalTable, DiscreteScm,
    JointTable, ENUMERATION_CAP, MAX_CARDINALITY,
};

use crate::error::Result;

/// One row of probabilities drawn from the flat Dirichlet.
pub fn dirichlet_row(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    let mut row: Vec<f64> = draws.iter().map(|v| v / s).collect();
    // Put the rounding residue on the largest entry so the row sums to 1.
    let resid = 1.0 - row.iter().sum::<f64>();
    let big = (0..k).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    row[big] += resid;
    row
}

pub fn random_cpt(cards: &[usize], parents: &[usize], card: usize, rng: &mut impl Rng) -> Vec<f64> {
    let rows: usize = parents.iter().map(|&p| cards[p]).product();
    (0..rows).flat_map(|_| dirichlet_row(card, rng)).collect()
}

fn build(cards: Vec<usize>, parents: Vec<Vec<usize>>, y: usize, rng: &mut impl Rng) -> Result<DiscreteScm> {
    let cpts = (0..cards.len())
        .map(|i| random_cpt(&cards, &parents[i], cards[i], rng))
        .collect();
    DiscreteScm::new(cards, parents, cpts, y)
}

/// Random DAG over `d` variables with cardinalities in `2..=max_card` and
/// generic CPTs; each forward pair is an edge with probability one half.
pub fn random_discrete_scm(d: usize, max_card: usize, rng: &mut impl Rng) -> Result<DiscreteScm> {
    let cards: Vec<usize> = (0..d).map(|_| rng.random_range(2..=max_card.max(2))).collect();
    let order = shuffled(d, rng);
    let mut parents = vec![Vec::new(); d];
    for j in 0..d {
        for i in 0..j {
            if rng.random_bool(0.5) {
                parents[order[j]].push(order[i]);
            }
        }
        parents[order[j]].sort_unstable();
    }
    let y = rng.random_range(0..d);
    build(cards, parents, y, rng)
}

fn shuffled(d: usize, rng: &mut impl Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..d).collect();
    v.shuffle(rng);
    v
}

/// An SCM in which the target has a child and a co-parent, plus a child
/// intervention (mechanism replaced by its marginal) and a co-parent
/// intervention (random mechanism over non-descendants other than y).
pub fn random_prop32_instance(rng: &mut impl Rng) -> Result<(DiscreteScm, Intervention, Intervention)> {
    let d = rng.random_range(4..=6);
    let cards: Vec<usize> = (0..d).map(|_| rng.random_range(2..=3)).collect();
    // In construction order: co-parent 0, target 1, shared child 2.
    let mut local = vec![Vec::new(); d];
    local[2] = vec![0, 1];
    for (j, ps) in local.iter_mut().enumerate().skip(3) {
        for i in 0..j {
            if rng.random_bool(0.5) {
                ps.push(i);
            }
        }
    }
    let label = shuffled(d, rng);
    let mut parents = vec![Vec::new(); d];
    let mut relabeled_cards = vec![0; d];
    for j in 0..d {
        let mut ps: Vec<usize> = local[j].iter().map(|&i| label[i]).collect();
        ps.sort_unstable();
        parents[label[j]] = ps;
        relabeled_cards[label[j]] = cards[j];
    }
    let (cp, y, child) = (label[0], label[1], label[2]);
    let scm = build(relabeled_cards, parents, y, rng)?;

    let joint = enumerate_joint(&scm)?;
    let child_iv = Intervention {
        target: child,
        parents: Vec::new(),
        cpt: joint.marginal(&[child]),
    };
    let below = scm.graph().descendants(cp);
    let new_parents: Vec<usize> = (0..d)
        .filter(|&v| v != cp && v != y && !below.contains(&v) && rng.random_bool(0.5))
        .collect();
    let cp_iv = Intervention {
        target: cp,
        cpt: random_cpt(scm.cards(), &new_parents, scm.cards()[cp], rng),
        parents: new_parents,
    };
    Ok((scm, child_iv, cp_iv))
}

/// Which kind of latent intervention a two-level instance carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentChange {
    /// Fresh random mechanism on a random non-target latent.
    Generic,
    /// Fresh random mechanism on a child of the target.
    Child,
    /// Noise permutation that leaves the latent CPT unchanged.
    NoisePermutation,
}

/// Latent SCM over 2-3 variables holding the target, 1-2 observations each
/// reading a nonempty set of latents, and one latent intervention.
pub fn random_two_level(change: LatentChange, rng: &mut impl Rng) -> Result<(TwoLevelScm, Intervention)> {
    let n_latent = rng.random_range(2..=3);
    let n_obs = rng.random_range(1..=2);
    let d = n_latent + n_obs;
    let cards: Vec<usize> = (0..d).map(|_| rng.random_range(2..=3)).collect();
    let mut parents = vec![Vec::new(); d];
    // Latent chain order is the index order; the target is the first latent
    // so that later latents can be its children.
    for j in 1..n_latent {
        parents[j] = (0..j).filter(|_| rng.random_bool(0.6)).collect();
    }
    if change == LatentChange::Child {
        parents[1] = vec![0];
    }
    for ps in parents.iter_mut().skip(n_latent) {
        while ps.is_empty() {
            *ps = (0..n_latent).filter(|_| rng.random_bool(0.6)).collect();
        }
    }
    let scm = build(cards.clone(), parents.clone(), 0, rng)?;
    let target = match change {
        LatentChange::Child => 1,
        _ => rng.random_range(1..n_latent),
    };
    let iv = match change {
        LatentChange::Generic | LatentChange::Child => Intervention {
            target,
            parents: parents[target].clone(),
            cpt: random_cpt(&cards, &parents[target], cards[target], rng),
        },
        LatentChange::NoisePermutation => {
            // Uniform mechanism written as (shift + u) mod k, rewritten with a
            // different shift per parent configuration: same CPT, new function.
            let k = cards[target];
            let uniform = vec![1.0 / k as f64; k];
            let rows: usize = parents[target].iter().map(|&p| cards[p]).product();
            let table = (0..rows)
                .flat_map(|r| (0..k).map(move |u| (r + 1 + u) % k))
                .collect();
            let scm_u = scm.with_mechanism(
                target,
                parents[target].clone(),
                (0..rows).flat_map(|_| uniform.clone()).collect(),
            )?;
            let mech = FunctionalMechanism {
                parents: parents[target].clone(),
                noise: uniform,
                table,
            };
            let iv = mech.intervention(target, &cards)?;
            return Ok((TwoLevelScm::new(scm_u, n_latent)?, iv));
        }
    };
    Ok((TwoLevelScm::new(scm, n_latent)?, iv))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropSuite {
    pub seed: u64,
    pub instances: usize,
    pub prop31_max_deviation: f64,
    pub prop32_coparent_max_tv: f64,
    pub prop32_child_min_tv: f64,
    /// Child interventions with TV above `1e-6`.
    pub prop32_child_effective: usize,
    pub prop33_violations: usize,
    /// Latent marginal shifted but the conditional did not move.
    pub prop33_shift_without_effect: usize,
    pub prop33_max_equal_marginal_tv: f64,
}

pub const CHILD_TV_FLOOR: f64 = 1e-6;

impl PropSuite {
    pub fn prop31_passes(&self) -> bool {
        self.prop31_max_deviation < TV_ZERO
    }

    pub fn prop32_passes(&self) -> bool {
        self.prop32_coparent_max_tv < TV_ZERO && self.prop32_child_effective * 100 >= 99 * self.instances
    }

    pub fn prop33_passes(&self) -> bool {
        self.prop33_violations == 0
    }

    pub fn to_markdown(&self) -> String {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        format!(
            "Seed {}, {} instances per check.\n\n\
             | check | statistic | value | result |\n|---|---|---|---|\n\
             | Markov blanket | max TV p(y|x) vs p(y|Mb) | {:e} | {} |\n\
             | co-parent intervention | max TV of p(y|x) | {:e} | {} |\n\
             | child intervention | instances with TV > 1e-6 | {}/{} (min {:e}) | {} |\n\
             | latent marginal | implication violations | {} (marginal shifts without effect: {}) | {} |\n",
            self.seed,
            self.instances,
            self.prop31_max_deviation,
            mark(self.prop31_passes()),
            self.prop32_coparent_max_tv,
            mark(self.prop32_coparent_max_tv < TV_ZERO),
            self.prop32_child_effective,
            self.instances,
            self.prop32_child_min_tv,
            mark(self.prop32_child_effective * 100 >= 99 * self.instances),
            self.prop33_violations,
            self.prop33_shift_without_effect,
            mark(self.prop33_passes()),
        )
    }
}

fn instance_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run all three checks on `instances` random SCMs each.
pub fn run_suite(seed: u64, instances: usize) -> Result<PropSuite> {
    let p31 = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, k as u64);
            let d = rng.random_range(2..=6);
            check_prop_31(&random_discrete_scm(d, 3, &mut rng)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let p32 = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, (1 << 32) + k as u64);
            let (scm, child, cp) = random_prop32_instance(&mut rng)?;
            Ok((check_prop_32(&scm, &child)?.tv, check_prop_32(&scm, &cp)?.tv))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let p33 = (0..instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, (2 << 32) + k as u64);
            let change = [LatentChange::Generic, LatentChange::Child, LatentChange::NoisePermutation][k % 3];
            let (model, iv) = random_two_level(change, &mut rng)?;
            check_prop_33(&model, &iv)
        })
        .collect::<Result<Vec<Prop33Record>>>()?;
    Ok(PropSuite {
        seed,
        instances,
        prop31_max_deviation: p31.iter().copied().fold(0.0, f64::max),
        prop32_coparent_max_tv: p32.iter().map(|p| p.1).fold(0.0, f64::max),
        prop32_child_min_tv: p32.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        prop32_child_effective: p32.iter().filter(|p| p.0 > CHILD_TV_FLOOR).count(),
        prop33_violations: p33.iter().filter(|r| !r.implication_holds).count(),
        prop33_shift_without_effect: p33.iter().filter(|r| r.shifted_without_effect).count(),
        prop33_max_equal_marginal_tv: p33
            .iter()
            .filter(|r| r.tv_latent_marginal < TV_ZERO)
            .map(|r| r.tv_conditional)
            .fold(0.0, f64::max),
    })
}
