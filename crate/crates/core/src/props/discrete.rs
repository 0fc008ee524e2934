//! Discrete SCMs as CPT products, exact joints and conditionals.

use std::collections::BTreeSet;

use crate::error::{CadeError, Result};
use crate::scm::CausalGraph;

pub const MAX_CARDINALITY: usize = 5;
pub const ENUMERATION_CAP: usize = 1_000_000;

/// Variables with finite support `0..cards[i]`. The CPT of variable `i`
/// holds one row of `cards[i]` probabilities per parent configuration;
/// parent configurations are numbered mixed-radix with the last listed
/// parent varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    cards: Vec<usize>,
    parents: Vec<Vec<usize>>,
    cpts: Vec<Vec<f64>>,
    y_index: usize,
    graph: CausalGraph,
}

/// Number of configurations of `vars`, checked against the cap.
pub(crate) fn config_count(cards: &[usize], vars: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &v in vars {
        n = n.checked_mul(cards[v]).filter(|&n| n <= ENUMERATION_CAP).ok_or(CadeError::Size {
            configs: vars.iter().map(|&v| cards[v] as f64).product::<f64>() as usize,
            cap: ENUMERATION_CAP,
        })?;
    }
    Ok(n)
}

/// Mixed-radix index of the values of `vars` inside `config`.
pub(crate) fn sub_index(cards: &[usize], vars: &[usize], config: &[usize]) -> usize {
    vars.iter().fold(0, |acc, &v| acc * cards[v] + config[v])
}

impl DiscreteScm {
    pub fn new(cards: Vec<usize>, parents: Vec<Vec<usize>>, cpts: Vec<Vec<f64>>, y_index: usize) -> Result<Self> {
        let d = cards.len();
        if d == 0 || parents.len() != d || cpts.len() != d {
            return Err(CadeError::Shape("cards, parents and cpts must have one entry per variable".into()));
        }
        if y_index >= d {
            return Err(CadeError::Config(format!("y_index {y_index} outside 0..{d}")));
        }
        if let Some(c) = cards.iter().find(|&&c| c == 0 || c > MAX_CARDINALITY) {
            return Err(CadeError::Config(format!("cardinality {c} outside 1..={MAX_CARDINALITY}")));
        }
        let mut edges = Vec::new();
        for (i, ps) in parents.iter().enumerate() {
            let unique: BTreeSet<_> = ps.iter().collect();
            if unique.len() != ps.len() || ps.iter().any(|&p| p >= d || p == i) {
                return Err(CadeError::Config(format!("invalid parent list {ps:?} for variable {i}")));
            }
            edges.extend(ps.iter().map(|&p| (p, i)));
        }
        let graph = CausalGraph::from_edges(d, &edges)?;
        for i in 0..d {
            validate_cpt(&cards, &parents[i], cards[i], &cpts[i])
                .map_err(|e| e.context(&format!("variable {i}")))?;
        }
        Ok(Self {
            cards,
            parents,
            cpts,
            y_index,
            graph,
        })
    }

    pub fn d(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn cpt(&self, i: usize) -> &[f64] {
        &self.cpts[i]
    }

    pub fn y_index(&self) -> usize {
        self.y_index
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub(crate) fn prob(&self, i: usize, config: &[usize]) -> f64 {
        let row = sub_index(&self.cards, &self.parents[i], config);
        self.cpts[i][row * self.cards[i] + config[i]]
    }

    /// Replace the mechanism of `target` with `new_parents` and `cpt`.
    pub fn with_mechanism(&self, target: usize, new_parents: Vec<usize>, cpt: Vec<f64>) -> Result<Self> {
        if target >= self.d() {
            return Err(CadeError::Config(format!("no variable {target}")));
        }
        let mut parents = self.parents.clone();
        let mut cpts = self.cpts.clone();
        parents[target] = new_parents;
        cpts[target] = cpt;
        DiscreteScm::new(self.cards.clone(), parents, cpts, self.y_index)
    }
}

pub(crate) fn validate_cpt(cards: &[usize], parents: &[usize], card: usize, cpt: &[f64]) -> Result<()> {
    let rows = config_count(cards, parents)?;
    if cpt.len() != rows * card {
        return Err(CadeError::Shape(format!("cpt has {} entries, expected {}", cpt.len(), rows * card)));
    }
    if cpt.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(CadeError::Range("cpt entries must lie in [0, 1]".into()));
    }
    for row in cpt.chunks(card) {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(CadeError::Range(format!("cpt row sums to {s}")));
        }
    }
    Ok(())
}

/// Probability of every full configuration, last variable fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Visit `(config, probability)` for every configuration.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut config = vec![0; self.cards.len()];
        for &p in &self.probs {
            f(&config, p);
            for k in (0..config.len()).rev() {
                config[k] += 1;
                if config[k] < self.cards[k] {
                    break;
                }
                config[k] = 0;
            }
        }
    }

    /// Marginal over `vars`, indexed mixed-radix in the order given.
    pub fn marginal(&self, vars: &[usize]) -> Vec<f64> {
        let n: usize = vars.iter().map(|&v| self.cards[v]).product();
        let mut out = vec![0.0; n];
        self.for_each(|c, p| out[sub_index(&self.cards, vars, c)] += p);
        out
    }
}

pub fn enumerate_joint(scm: &DiscreteScm) -> Result<JointTable> {
    let all: Vec<usize> = (0..scm.d()).collect();
    let n = config_count(&scm.cards, &all)?;
    let mut probs = Vec::with_capacity(n);
    let mut config = vec![0; scm.d()];
    for _ in 0..n {
        probs.push((0..scm.d()).map(|i| scm.prob(i, &config)).product());
        for k in (0..config.len()).rev() {
            config[k] += 1;
            if config[k] < scm.cards[k] {
                break;
            }
            config[k] = 0;
        }
    }
    Ok(JointTable {
        cards: scm.cards.clone(),
        probs,
    })
}

/// `p(y | given)` for every configuration of `given`; `None` where the
/// evidence has probability zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub given: Vec<usize>,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl ConditionalTable {
    /// Row for the full configuration `config`.
    pub fn row_for(&self, cards: &[usize], config: &[usize]) -> Option<&[f64]> {
        self.rows[sub_index(cards, &self.given, config)].as_deref()
    }
}

pub fn conditional_y_given(joint: &JointTable, y: usize, given: &[usize]) -> Result<ConditionalTable> {
    if given.contains(&y) {
        return Err(CadeError::Config("the target cannot be conditioned on".into()));
    }
    let mut vars = given.to_vec();
    vars.push(y);
    let table = joint.marginal(&vars);
    let ky = joint.cards[y];
    let rows = table
        .chunks(ky)
        .map(|r| {
            let z: f64 = r.iter().sum();
            (z > 0.0).then(|| r.iter().map(|p| p / z).collect())
        })
        .collect();
    Ok(ConditionalTable {
        given: given.to_vec(),
        rows,
    })
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_independent_variables() {
        let one = DiscreteScm::new(vec![2], vec![vec![]], vec![vec![0.3, 0.7]], 0).unwrap();
        assert_eq!(enumerate_joint(&one).unwrap().probs(), &[0.3, 0.7]);
        let coins = DiscreteScm::new(
            vec![2, 2],
            vec![vec![], vec![]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            0,
        )
        .unwrap();
        assert_eq!(enumerate_joint(&coins).unwrap().probs(), &[0.25; 4]);
    }

    #[test]
    fn chain_matches_hand_product() {
        // x -> y, p(x) = (0.2, 0.8), p(y | x=0) = (0.9, 0.1), p(y | x=1) = (0.4, 0.6).
        let scm = DiscreteScm::new(
            vec![2, 2],
            vec![vec![], vec![0]],
            vec![vec![0.2, 0.8], vec![0.9, 0.1, 0.4, 0.6]],
            1,
        )
        .unwrap();
        let j = enumerate_joint(&scm).unwrap();
        let want = [0.2 * 0.9, 0.2 * 0.1, 0.8 * 0.4, 0.8 * 0.6];
        for (a, b) in j.probs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let c = conditional_y_given(&j, 1, &[0]).unwrap();
        let r = c.rows[1].as_ref().unwrap();
        assert!((r[0] - 0.4).abs() < 1e-15 && (r[1] - 0.6).abs() < 1e-15);
        let m = conditional_y_given(&j, 1, &[]).unwrap();
        let py = m.rows[0].as_ref().unwrap();
        assert!((py[0] - 0.5).abs() < 1e-15);
        assert!(conditional_y_given(&j, 1, &[1]).is_err());
    }

    #[test]
    fn deterministic_conditionals_are_point_masses() {
        // a -> y -> b with y = a and b = 1 - y; evidence (a=0, b=0) is impossible.
        let scm = DiscreteScm::new(
            vec![2, 2, 2],
            vec![vec![], vec![0], vec![1]],
            vec![vec![0.5, 0.5], vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]],
            1,
        )
        .unwrap();
        let j = enumerate_joint(&scm).unwrap();
        let c = conditional_y_given(&j, 1, &[0, 2]).unwrap();
        assert_eq!(c.rows[0], None);
        assert_eq!(c.rows[1], Some(vec![1.0, 0.0]));
        assert_eq!(c.rows[2], Some(vec![0.0, 1.0]));
        assert_eq!(c.rows[3], None);
    }

    #[test]
    fn validation_and_cap() {
        assert!(DiscreteScm::new(vec![2], vec![vec![]], vec![vec![0.3, 0.6]], 0).is_err());
        assert!(DiscreteScm::new(vec![6], vec![vec![]], vec![vec![1.0 / 6.0; 6]], 0).is_err());
        let cyc = DiscreteScm::new(
            vec![2, 2],
            vec![vec![1], vec![0]],
            vec![vec![0.5; 4], vec![0.5; 4]],
            0,
        );
        assert!(matches!(cyc, Err(CadeError::Cycle { .. })));
        let d = 9;
        let big = DiscreteScm::new(
            vec![5; d],
            vec![vec![]; d],
            vec![vec![0.2; 5]; d],
            0,
        )
        .unwrap();
        assert!(matches!(enumerate_joint(&big), Err(CadeError::Size { .. })));
    }
}
