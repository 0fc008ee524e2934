//! Weighted DAGs given as dense adjacency matrices.
//!
//! Entry `(i, j)` of the adjacency is the weight of the edge `i -> j`; any
//! nonzero entry is an edge. Construction validates acyclicity and derives a
//! deterministic topological order (ties broken by ascending index) together
//! with the graph depth, the number of edges on the longest directed path.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::{CadeError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    d: usize,
    adjacency: Vec<f64>,
    topo_order: Vec<usize>,
    depth: usize,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl CausalGraph {
    /// Validate a `d x d` row-major adjacency and derive order and depth.
    pub fn new(d: usize, adjacency: Vec<f64>) -> Result<Self> {
        if adjacency.len() != d * d {
            return Err(CadeError::Shape(format!(
                "adjacency has {} entries, expected {d}x{d}",
                adjacency.len()
            )));
        }
        if let Some(pos) = adjacency.iter().position(|w| !w.is_finite()) {
            return Err(CadeError::Numeric(format!(
                "adjacency entry ({}, {}) is not finite",
                pos / d,
                pos % d
            )));
        }

        let mut parents = vec![Vec::new(); d];
        let mut children = vec![Vec::new(); d];
        for i in 0..d {
            for j in 0..d {
                if adjacency[i * d + j] != 0.0 {
                    children[i].push(j);
                    parents[j].push(i);
                }
            }
        }

        // Kahn's algorithm with a min-heap keeps the order stable by index.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..d)
            .filter(|&v| indegree[v] == 0)
            .map(Reverse)
            .collect();
        let mut topo_order = Vec::with_capacity(d);
        while let Some(Reverse(v)) = ready.pop() {
            topo_order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if topo_order.len() < d {
            let remaining: Vec<bool> = indegree.iter().map(|&k| k > 0).collect();
            return Err(CadeError::Cycle {
                cycle: find_cycle(&children, &remaining),
            });
        }

        let mut longest = vec![0usize; d];
        for &v in &topo_order {
            for &c in &children[v] {
                longest[c] = longest[c].max(longest[v] + 1);
            }
        }
        let depth = longest.into_iter().max().unwrap_or(0);

        Ok(Self {
            d,
            adjacency,
            topo_order,
            depth,
            parents,
            children,
        })
    }

    /// Graph with a unit-weight edge for every `(from, to)` pair.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![0.0; d * d];
        for &(from, to) in edges {
            if from >= d || to >= d {
                return Err(CadeError::Shape(format!("edge ({from}, {to}) outside 0..{d}")));
            }
            adjacency[from * d + to] = 1.0;
        }
        Self::new(d, adjacency)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Row-major adjacency.
    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    /// Weight of the edge `from -> to` (zero when absent).
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.adjacency[from * self.d + to]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn ancestors(&self, v: usize) -> BTreeSet<usize> {
        self.reach(v, &self.parents)
    }

    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        self.reach(v, &self.children)
    }

    /// Union of the descendants of every vertex in `set`, excluding `set`.
    pub fn descendants_of_set(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &v in set {
            out.extend(self.descendants(v));
        }
        out.retain(|v| !set.contains(v));
        out
    }

    fn reach(&self, v: usize, next: &[Vec<usize>]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = next[v].clone();
        while let Some(w) = stack.pop() {
            if seen.insert(w) {
                stack.extend(next[w].iter().copied());
            }
        }
        seen
    }
}

/// Parents, children, and the other parents of the children of `target`.
pub fn markov_blanket(graph: &CausalGraph, target: usize) -> BTreeSet<usize> {
    let mut blanket: BTreeSet<usize> = graph.parents(target).iter().copied().collect();
    for &c in graph.children(target) {
        blanket.insert(c);
        blanket.extend(graph.parents(c).iter().copied());
    }
    blanket.remove(&target);
    blanket
}

/// Locate one directed cycle among the vertices flagged in `remaining`.
///
/// Every flagged vertex kept a positive indegree after Kahn's algorithm, so
/// walking backwards along flagged parents never gets stuck and must revisit.
fn find_cycle(children: &[Vec<usize>], remaining: &[bool]) -> Vec<usize> {
    let d = children.len();
    let mut flagged_parent = vec![None; d];
    for u in 0..d {
        if !remaining[u] {
            continue;
        }
        for &c in &children[u] {
            if remaining[c] && flagged_parent[c].is_none() {
                flagged_parent[c] = Some(u);
            }
        }
    }
    let Some(start) = (0..d).find(|&v| remaining[v]) else {
        return Vec::new();
    };
    let mut position = vec![usize::MAX; d];
    let mut walk = Vec::new();
    let mut v = start;
    while position[v] == usize::MAX {
        position[v] = walk.len();
        walk.push(v);
        v = flagged_parent[v].expect("flagged vertex has a flagged parent");
    }
    let mut cycle = walk[position[v]..].to_vec();
    // The walk followed edges backwards.
    cycle.reverse();
    cycle
}
