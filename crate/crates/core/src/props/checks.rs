//! Exact checks of the Markov-blanket and intervention-invariance results.

use serde::Serialize;

use super::discrete::{
    conditional_y_given, enumerate_joint, sub_index, total_variation, DiscreteScm, JointTable,
};
use crate::error::{CadeError, Result};
use crate::scm::markov_blanket;

fn non_target(scm: &DiscreteScm) -> Vec<usize> {
    (0..scm.d()).filter(|&i| i != scm.y_index()).collect()
}

/// Largest TV distance between `p(y | rest)` and `p(y | blanket)` over
/// evidence with positive probability.
pub fn check_prop_31(scm: &DiscreteScm) -> Result<f64> {
    let blanket: Vec<usize> = markov_blanket(scm.graph(), scm.y_index()).into_iter().collect();
    conditional_gap(scm, &blanket)
}

/// As [`check_prop_31`] but against an arbitrary conditioning set.
pub fn conditional_gap(scm: &DiscreteScm, given: &[usize]) -> Result<f64> {
    let joint = enumerate_joint(scm)?;
    let y = scm.y_index();
    let full = conditional_y_given(&joint, y, &non_target(scm))?;
    let part = conditional_y_given(&joint, y, given)?;
    let mut worst: f64 = 0.0;
    let mut config = vec![0; scm.d()];
    let rest = non_target(scm);
    for row in &full.rows {
        if let Some(p) = row {
            let q = part.row_for(scm.cards(), &config).expect("finer evidence is possible");
            worst = worst.max(total_variation(p, q));
        }
        // Advance the non-target coordinates, last fastest.
        for &k in rest.iter().rev() {
            config[k] += 1;
            if config[k] < scm.cards()[k] {
                break;
            }
            config[k] = 0;
        }
    }
    Ok(worst)
}

/// A mechanism replacement `p(target | new_parents) = cpt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub target: usize,
    pub parents: Vec<usize>,
    pub cpt: Vec<f64>,
}

impl Intervention {
    pub fn apply(&self, scm: &DiscreteScm) -> Result<DiscreteScm> {
        scm.with_mechanism(self.target, self.parents.clone(), self.cpt.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Child,
    CoParent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop32Outcome {
    pub role: Role,
    /// Largest TV distance between the two `p(y | x)` over shared support.
    pub tv: f64,
}

/// Largest TV distance between `p(y | x)` under two joints, over `x` with
/// positive probability under both.
fn conditional_shift(a: &JointTable, b: &JointTable, y: usize, given: &[usize]) -> Result<f64> {
    let ca = conditional_y_given(a, y, given)?;
    let cb = conditional_y_given(b, y, given)?;
    Ok(ca
        .rows
        .iter()
        .zip(&cb.rows)
        .filter_map(|(p, q)| Some(total_variation(p.as_ref()?, q.as_ref()?)))
        .fold(0.0, f64::max))
}

pub fn role_of(scm: &DiscreteScm, target: usize) -> Result<Role> {
    let y = scm.y_index();
    let g = scm.graph();
    if target == y {
        return Err(CadeError::Config("cannot intervene on the target".into()));
    }
    if g.parents(y).contains(&target) {
        return Err(CadeError::Config(format!("variable {target} is a parent of the target")));
    }
    if g.children(y).contains(&target) {
        return Ok(Role::Child);
    }
    let shares_child = g.children(y).iter().any(|c| g.parents(*c).contains(&target));
    if shares_child {
        Ok(Role::CoParent)
    } else {
        Err(CadeError::Config(format!("variable {target} is neither a child nor a co-parent")))
    }
}

pub fn check_prop_32(scm: &DiscreteScm, intervention: &Intervention) -> Result<Prop32Outcome> {
    let role = role_of(scm, intervention.target)?;
    if role == Role::CoParent && intervention.parents.contains(&scm.y_index()) {
        return Err(CadeError::Config("a co-parent mechanism cannot read the target".into()));
    }
    let after = intervention.apply(scm)?;
    let a = enumerate_joint(scm)?;
    let b = enumerate_joint(&after)?;
    let tv = conditional_shift(&a, &b, scm.y_index(), &non_target(scm))?;
    Ok(Prop32Outcome { role, tv })
}

/// Latent variables `0..n_latent` form an SCM that contains the target;
/// the remaining variables are observations whose parents are all latent.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelScm {
    pub scm: DiscreteScm,
    pub n_latent: usize,
}

impl TwoLevelScm {
    pub fn new(scm: DiscreteScm, n_latent: usize) -> Result<Self> {
        if n_latent == 0 || n_latent >= scm.d() || scm.y_index() >= n_latent {
            return Err(CadeError::Config("need latent variables holding the target and at least one observation".into()));
        }
        for i in 0..scm.d() {
            if scm.parents(i).iter().any(|&p| p >= n_latent) {
                return Err(CadeError::Config(format!("variable {i} has a parent outside the latent layer")));
            }
        }
        Ok(Self { scm, n_latent })
    }

    pub fn latent(&self) -> Vec<usize> {
        (0..self.n_latent).collect()
    }

    pub fn observed(&self) -> Vec<usize> {
        (self.n_latent..self.scm.d()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop33Record {
    pub tv_latent_marginal: f64,
    pub tv_observed_marginal: f64,
    pub tv_conditional: f64,
    pub tv_joint: f64,
    /// Equal latent marginals came with equal conditionals, or the
    /// marginals differed.
    pub implication_holds: bool,
    /// Latent marginals differ yet the conditional is unchanged.
    pub shifted_without_effect: bool,
}

pub const TV_ZERO: f64 = 1e-10;

pub fn check_prop_33(model: &TwoLevelScm, intervention: &Intervention) -> Result<Prop33Record> {
    if intervention.target >= model.n_latent {
        return Err(CadeError::Config("interventions act on latent variables".into()));
    }
    if intervention.parents.iter().any(|&p| p >= model.n_latent) {
        return Err(CadeError::Config("latent mechanisms read only latent parents".into()));
    }
    let after = intervention.apply(&model.scm)?;
    let a = enumerate_joint(&model.scm)?;
    let b = enumerate_joint(&after)?;
    let tv_latent_marginal = total_variation(&a.marginal(&model.latent()), &b.marginal(&model.latent()));
    let tv_observed_marginal =
        total_variation(&a.marginal(&model.observed()), &b.marginal(&model.observed()));
    let tv_conditional = conditional_shift(&a, &b, model.scm.y_index(), &model.observed())?;
    let tv_joint = total_variation(a.probs(), b.probs());
    let latent_same = tv_latent_marginal < TV_ZERO;
    Ok(Prop33Record {
        tv_latent_marginal,
        tv_observed_marginal,
        tv_conditional,
        tv_joint,
        implication_holds: !latent_same || tv_conditional < TV_ZERO,
        shifted_without_effect: !latent_same && tv_conditional < TV_ZERO,
    })
}

/// A mechanism written as a function of parents and a discrete noise:
/// `value = table[parent_config * noise.len() + u]` with `u ~ noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMechanism {
    pub parents: Vec<usize>,
    pub noise: Vec<f64>,
    pub table: Vec<usize>,
}

impl FunctionalMechanism {
    /// The implied CPT for a variable of cardinality `card`.
    pub fn to_cpt(&self, cards: &[usize], card: usize) -> Result<Vec<f64>> {
        let rows: usize = self.parents.iter().map(|&p| cards[p]).product();
        let k = self.noise.len();
        if self.table.len() != rows * k {
            return Err(CadeError::Shape("mechanism table does not cover parents x noise".into()));
        }
        if self.table.iter().any(|&v| v >= card) {
            return Err(CadeError::Range("mechanism produces an out-of-range value".into()));
        }
        let mut cpt = vec![0.0; rows * card];
        for r in 0..rows {
            for (u, &pu) in self.noise.iter().enumerate() {
                cpt[r * card + self.table[r * k + u]] += pu;
            }
        }
        Ok(cpt)
    }

    pub fn intervention(&self, target: usize, cards: &[usize]) -> Result<Intervention> {
        Ok(Intervention {
            target,
            parents: self.parents.clone(),
            cpt: self.to_cpt(cards, cards[target])?,
        })
    }
}

/// Index of a parent configuration, exposed for building tables by hand.
pub fn parent_config_index(cards: &[usize], parents: &[usize], config: &[usize]) -> usize {
    sub_index(cards, parents, config)
}
