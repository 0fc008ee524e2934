//! Additive-noise SCMs of the form `f(x) = A^T f(x) + u`.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::graph::CausalGraph;
use super::transform::PiecewiseLinear;
use super::{CounterfactualEngine, InterventionMask};
use crate::error::{ensure_finite, CadeError, Result};

/// Distribution of one exogenous variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl NoiseSpec {
    pub fn standard_normal() -> Self {
        NoiseSpec::Gaussian { mean: 0.0, std: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { mean, std } if mean.is_finite() && std.is_finite() && std >= 0.0 => {
                Ok(())
            }
            NoiseSpec::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            other => Err(CadeError::Config(format!("invalid noise spec {other:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { mean, std } => {
                Normal::new(mean, std).expect("validated std").sample(rng)
            }
            NoiseSpec::Uniform { lo, hi } => {
                Uniform::new(lo, hi).expect("validated bounds").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    graph: CausalGraph,
    transforms: Vec<PiecewiseLinear>,
    noise: Vec<NoiseSpec>,
    y_index: usize,
    names: Vec<String>,
}

impl Scm {
    pub fn new(
        graph: CausalGraph,
        transforms: Vec<PiecewiseLinear>,
        noise: Vec<NoiseSpec>,
        y_index: usize,
        names: Vec<String>,
    ) -> Result<Self> {
        let d = graph.d();
        if transforms.len() != d || noise.len() != d || names.len() != d {
            return Err(CadeError::Shape(format!(
                "scm over {d} variables got {} transforms, {} noise specs, {} names",
                transforms.len(),
                noise.len(),
                names.len()
            )));
        }
        if y_index >= d {
            return Err(CadeError::Config(format!("y_index {y_index} outside 0..{d}")));
        }
        for n in &noise {
            n.validate()?;
        }
        let distinct: BTreeSet<&String> = names.iter().collect();
        if distinct.len() != d {
            return Err(CadeError::Config("variable names must be unique".into()));
        }
        Ok(Self {
            graph,
            transforms,
            noise,
            y_index,
            names,
        })
    }

    /// Identity transforms everywhere.
    pub fn linear(
        graph: CausalGraph,
        noise: Vec<NoiseSpec>,
        y_index: usize,
        names: Vec<String>,
    ) -> Result<Self> {
        let transforms = vec![PiecewiseLinear::identity(); graph.d()];
        Self::new(graph, transforms, noise, y_index, names)
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn y_index(&self) -> usize {
        self.y_index
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn transforms(&self) -> &[PiecewiseLinear] {
        &self.transforms
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn sample_exogenous<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.noise.iter().map(|n| n.sample(rng)).collect()
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() == self.d() {
            Ok(())
        } else {
            Err(CadeError::Shape(format!("{what} has length {}, expected {}", v.len(), self.d())))
        }
    }

    fn transform_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.iter()
            .zip(&self.transforms)
            .map(|(&v, t)| t.eval(v))
            .collect()
    }

    /// `sum_j A(j, i) f_j(v_j)` for every `i`, given `fv = f(v)`.
    fn parent_drive(&self, fv: &[f64], i: usize) -> f64 {
        self.graph
            .parents(i)
            .iter()
            .map(|&j| self.graph.weight(j, i) * fv[j])
            .sum()
    }

    /// Solve `f(x) = A^T f(x) + u` by substitution in topological order.
    pub fn forward_sample(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u, "exogenous vector")?;
        let d = self.d();
        let mut x = vec![0.0; d];
        let mut fx = vec![0.0; d];
        for &i in self.graph.topo_order() {
            let pre = ensure_finite(u[i], "exogenous")? + self.parent_drive(&fx, i);
            x[i] = self.transforms[i].invert(ensure_finite(pre, "structural assignment")?)?;
            fx[i] = self.transforms[i].eval(x[i])?;
        }
        Ok(x)
    }

    /// Recover the exogenous vector `u = (I - A^T) f(x)`.
    pub fn abduct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x, "observation")?;
        let fx = self.transform_all(x)?;
        (0..self.d())
            .map(|i| ensure_finite(fx[i] - self.parent_drive(&fx, i), "abducted exogenous"))
            .collect()
    }

    /// One application of the action-prediction update
    ///
    /// ```text
    /// x_adv = f^-1( A^T f(x') * (1 - m) + f(x') * m + u * (1 - m) )
    /// ```
    ///
    /// Intervened coordinates keep their value in `x_prime`; all others are
    /// regenerated from the parents in `x_prime` and their own exogenous.
    /// `x` is the factual observation that `u` was abducted from.
    pub fn counterfactual_step(
        &self,
        x: &[f64],
        x_prime: &[f64],
        u: &[f64],
        mask: &InterventionMask,
    ) -> Result<Vec<f64>> {
        self.check_len(x, "observation")?;
        self.check_len(x_prime, "intervened vector")?;
        self.check_len(u, "exogenous vector")?;
        self.check_mask(mask)?;
        let fxp = self.transform_all(x_prime)?;
        (0..self.d())
            .map(|i| {
                if mask.contains(i) {
                    Ok(x_prime[i])
                } else {
                    let pre = self.parent_drive(&fxp, i) + u[i];
                    self.transforms[i].invert(ensure_finite(pre, "counterfactual update")?)
                }
            })
            .collect()
    }

    /// Abduct, then apply `depth` counterfactual steps starting from `x_prime`.
    ///
    /// `x_prime` carries the intervened values on the mask. Off the mask it
    /// must agree with `x` except possibly on descendants of the mask, as
    /// `x` itself or an earlier counterfactual of `x` does; then `depth`
    /// rounds reach the fixed point.
    pub fn counterfactual(
        &self,
        x: &[f64],
        x_prime: &[f64],
        mask: &InterventionMask,
    ) -> Result<Vec<f64>> {
        self.check_len(x, "observation")?;
        self.check_len(x_prime, "intervened vector")?;
        self.check_mask(mask)?;
        if mask.is_empty() {
            return Ok(x.to_vec());
        }
        let u = self.abduct(x)?;
        // Outside the mask and its descendants the update reproduces `x` up to
        // rounding; pin those coordinates so they stay bitwise factual.
        let reach = self.graph.descendants_of_set(&mask.indices());
        let pin = |v: &mut Vec<f64>| {
            for i in (0..self.d()).filter(|i| !mask.contains(*i) && !reach.contains(i)) {
                v[i] = x[i];
            }
        };
        let mut current = x_prime.to_vec();
        pin(&mut current);
        for _ in 0..self.graph.depth() {
            current = self.counterfactual_step(x, &current, &u, mask)?;
            pin(&mut current);
        }
        #[cfg(debug_assertions)]
        {
            let extra = self.counterfactual_step(x, &current, &u, mask)?;
            let moved = extra
                .iter()
                .zip(&current)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            debug_assert!(moved < 1e-10, "counterfactual not at a fixed point ({moved})");
        }
        Ok(current)
    }

    /// `counterfactual` with the intervention given as `(index, value)` pairs.
    pub fn intervene(&self, x: &[f64], assignment: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mask = InterventionMask::from_indices(self.d(), assignment.iter().map(|&(i, _)| i))?;
        let mut x_prime = x.to_vec();
        for &(i, v) in assignment {
            x_prime[i] = v;
        }
        self.counterfactual(x, &x_prime, &mask)
    }

    fn check_mask(&self, mask: &InterventionMask) -> Result<()> {
        if mask.len() == self.d() {
            Ok(())
        } else {
            Err(CadeError::Shape(format!(
                "mask has length {}, expected {}",
                mask.len(),
                self.d()
            )))
        }
    }
}

impl CounterfactualEngine for Scm {
    fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    fn y_index(&self) -> usize {
        self.y_index
    }

    fn names(&self) -> &[String] {
        &self.names
    }

    fn counterfactual(
        &self,
        x: &[f64],
        x_prime: &[f64],
        mask: &InterventionMask,
    ) -> Result<Vec<f64>> {
        Scm::counterfactual(self, x, x_prime, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Toy graph with a = b = c = 1, order (x1, y, x3, x2).
    fn toy(a: f64, b: f64, c: f64) -> Scm {
        let mut adj = vec![0.0; 16];
        adj[1] = a; // x1 -> y
        adj[4 + 3] = c; // y -> x2
        adj[2 * 4 + 3] = b; // x3 -> x2
        let g = CausalGraph::new(4, adj).unwrap();
        let names = ["x1", "y", "x3", "x2"].map(String::from).to_vec();
        Scm::linear(g, vec![NoiseSpec::standard_normal(); 4], 1, names).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn no_edges_forward_is_identity() {
        let g = CausalGraph::new(3, vec![0.0; 9]).unwrap();
        let names = ["a", "b", "c"].map(String::from).to_vec();
        let scm = Scm::linear(g, vec![NoiseSpec::standard_normal(); 3], 0, names).unwrap();
        assert_eq!(scm.forward_sample(&[0.3, -1.0, 2.0]).unwrap(), vec![0.3, -1.0, 2.0]);
        assert_eq!(scm.abduct(&[0.3, -1.0, 2.0]).unwrap(), vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn toy_forward_and_abduct_by_hand() {
        let scm = toy(1.0, 1.0, 1.0);
        let x = scm.forward_sample(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 1.0, 4.0]);
        assert_eq!(scm.abduct(&x).unwrap(), vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn empty_mask_step_regenerates_x() {
        let scm = toy(0.7, -1.3, 2.1);
        let x = scm.forward_sample(&[0.2, -0.4, 1.1, 0.5]).unwrap();
        let u = scm.abduct(&x).unwrap();
        let mask = InterventionMask::empty(4);
        let out = scm.counterfactual_step(&x, &x, &u, &mask).unwrap();
        assert!(close(&out, &x, 1e-12));
    }

    #[test]
    fn coparent_intervention_propagates_to_child() {
        let (a, b, c) = (0.8, 1.7, -0.6);
        let scm = toy(a, b, c);
        let x = scm.forward_sample(&[0.5, -0.2, 0.9, 0.3]).unwrap();
        let eta = 0.37;
        let out = scm.intervene(&x, &[(2, x[2] + eta)]).unwrap();
        let expected = [x[0], x[1], x[2] + eta, x[3] + b * eta];
        assert!(close(&out, &expected, 1e-12), "{out:?} vs {expected:?}");
    }

    #[test]
    fn child_intervention_changes_only_child() {
        let scm = toy(0.8, 1.7, -0.6);
        let x = scm.forward_sample(&[0.5, -0.2, 0.9, 0.3]).unwrap();
        let out = scm.intervene(&x, &[(3, x[3] + 0.25)]).unwrap();
        let expected = [x[0], x[1], x[2], x[3] + 0.25];
        assert!(close(&out, &expected, 1e-12));
    }

    #[test]
    fn re_assigning_current_value_is_a_no_op() {
        let scm = toy(0.8, 1.7, -0.6);
        let x = scm.forward_sample(&[0.5, -0.2, 0.9, 0.3]).unwrap();
        let out = scm.intervene(&x, &[(0, x[0]), (2, x[2])]).unwrap();
        assert!(close(&out, &x, 1e-10));
    }

    #[test]
    fn empty_mask_counterfactual_returns_input() {
        let scm = toy(1.0, 1.0, 1.0);
        let x = vec![1.0, 2.0, 1.0, 4.0];
        let out = scm.counterfactual(&x, &x, &InterventionMask::empty(4)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn nonlinear_round_trip() {
        let g = CausalGraph::new(2, vec![0.0, 1.5, 0.0, 0.0]).unwrap();
        let t = PiecewiseLinear::new(vec![0.0], vec![0.5, 2.0]).unwrap();
        let names = ["a", "b"].map(String::from).to_vec();
        let scm = Scm::new(
            g,
            vec![t.clone(), t],
            vec![NoiseSpec::standard_normal(); 2],
            1,
            names,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u = scm.sample_exogenous(&mut rng);
            let back = scm.abduct(&scm.forward_sample(&u).unwrap()).unwrap();
            assert!(close(&back, &u, 1e-12));
        }
    }

    #[test]
    fn shape_and_value_errors() {
        let scm = toy(1.0, 1.0, 1.0);
        assert!(matches!(scm.forward_sample(&[0.0; 3]), Err(CadeError::Shape(_))));
        assert!(matches!(
            scm.abduct(&[0.0, f64::INFINITY, 0.0, 0.0]),
            Err(CadeError::Range(_))
        ));
        assert!(matches!(
            scm.forward_sample(&[f64::NAN, 0.0, 0.0, 0.0]),
            Err(CadeError::Numeric(_))
        ));
    }
}
