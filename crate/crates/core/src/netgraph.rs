//! Time-varying directed communication graphs.
//!
//! Every node always counts itself as an in- and out-neighbor, so self-loops
//! are enforced at construction and the out-degree `d_j >= 1` includes the
//! loop. The induced mixing matrix, with entry `1/d_j` for every out-neighbor
//! `i` of `j`, is column-stochastic by construction; getting the self-loop
//! bookkeeping wrong silently breaks mass conservation downstream.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// A directed graph on `[n]` with mandatory self-loops. Edge `(j, i)` means
/// `i` receives from `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    ins: Vec<Vec<usize>>,
    out_degree: Vec<usize>,
}

impl DiGraph {
    /// Build a graph from `(from, to)` pairs; self-loops are added for every
    /// node whether listed or not.
    pub fn new(n: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("node count must be positive".to_string()));
        }
        let mut edges = BTreeSet::new();
        for &(from, to) in edge_list {
            if from >= n || to >= n {
                return Err(Error::Graph(format!(
                    "edge ({from}, {to}) out of range for {n} nodes"
                )));
            }
            edges.insert((from, to));
        }
        for v in 0..n {
            edges.insert((v, v));
        }
        let mut ins = vec![Vec::new(); n];
        let mut out_degree = vec![0usize; n];
        for &(from, to) in &edges {
            ins[to].push(from);
            out_degree[from] += 1;
        }
        Ok(DiGraph {
            n,
            edges,
            ins,
            out_degree,
        })
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                edges.push((i, j));
            }
        }
        DiGraph::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Out-degree of `j`, self-loop included.
    pub fn out_degree(&self, j: usize) -> usize {
        self.out_degree[j]
    }

    /// In-neighbors of `i` (sorted, includes `i`).
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.ins[i]
    }

    /// Push-sum weights of sender `j`: every out-neighbor (including `j`)
    /// receives `1/d_j`, so the weights sum to one.
    pub fn mixing_weights(&self, j: usize) -> Vec<(usize, f64)> {
        let w = 1.0 / self.out_degree[j] as f64;
        self.edges
            .range((j, 0)..=(j, self.n - 1))
            .map(|&(_, to)| (to, w))
            .collect()
    }

    /// Dense column-stochastic mixing matrix, row-major: `A[i][j] = 1/d_j`
    /// when `i` receives from `j`.
    pub fn mixing_matrix(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for &(from, to) in &self.edges {
            a[to][from] = 1.0 / self.out_degree[from] as f64;
        }
        a
    }

    /// Edge union with another graph on the same node set.
    pub fn union(&self, other: &DiGraph) -> Result<DiGraph> {
        if self.n != other.n {
            return Err(Error::Graph(format!(
                "union of graphs with different node counts: {} vs {}",
                self.n, other.n
            )));
        }
        let combined: Vec<(usize, usize)> = self
            .edges
            .iter()
            .chain(other.edges.iter())
            .copied()
            .collect();
        DiGraph::new(self.n, &combined)
    }

    /// True iff every node reaches every node along directed edges.
    ///
    /// Forward and backward reachability from node 0 via BFS; the graph is
    /// strongly connected iff both sweeps cover all nodes.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        let mut outs = vec![Vec::new(); self.n];
        for &(from, to) in &self.edges {
            outs[from].push(to);
        }
        let reach = |adj: &[Vec<usize>]| -> usize {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
            count
        };
        if reach(&outs) != self.n {
            return false;
        }
        reach(&self.ins) == self.n
    }
}

/// How the round index selects a graph from the schedule's list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Selector {
    /// Cycle through the list: graph `t mod k` at round `t`.
    RoundRobin,
    /// Alias of round-robin; reads naturally for two-graph schedules.
    Alternate,
    /// Round-robin perturbed by seeded randomness: with probability `p` the
    /// round uses a uniformly random graph instead of the round-robin one.
    /// Deterministic given `(seed, t)`.
    SeededRandom { p: f64, seed: Option<u64> },
}

impl Selector {
    fn index(&self, t: u64, k: usize, fallback_seed: u64) -> usize {
        match self {
            Selector::RoundRobin | Selector::Alternate => (t % k as u64) as usize,
            Selector::SeededRandom { p, seed } => {
                let seed = seed.unwrap_or(fallback_seed);
                let (u, pick) = round_draws(seed, t);
                if u < *p {
                    pick % k
                } else {
                    (t % k as u64) as usize
                }
            }
        }
    }
}

/// Stateless per-round randomness: a small xorshift-style mix of (seed, t).
fn round_draws(seed: u64, t: u64) -> (f64, usize) {
    let mut s = seed ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        s
    };
    let a = next();
    let b = next();
    let u = (a >> 11) as f64 / (1u64 << 53) as f64;
    (u, b as usize)
}

/// An ordered list of graphs plus the signal choosing which one is live at
/// each round.
#[derive(Debug, Clone)]
pub struct GraphSchedule {
    graphs: Vec<DiGraph>,
    selector: Selector,
    claimed_b: Option<usize>,
    seed: u64,
}

impl GraphSchedule {
    pub fn new(graphs: Vec<DiGraph>, selector: Selector, claimed_b: Option<usize>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Graph("schedule needs at least one graph".to_string()));
        }
        let n = graphs[0].n();
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::Graph(
                "all graphs in a schedule must share the node count".to_string(),
            ));
        }
        if claimed_b == Some(0) {
            return Err(Error::Graph("claimed B must be at least 1".to_string()));
        }
        Ok(GraphSchedule {
            graphs,
            selector,
            claimed_b,
            seed: 0,
        })
    }

    /// Fallback seed for a `SeededRandom` selector that does not carry one.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn graphs(&self) -> &[DiGraph] {
        &self.graphs
    }

    pub fn claimed_b(&self) -> Option<usize> {
        self.claimed_b
    }

    pub fn graph_at(&self, t: u64) -> &DiGraph {
        let idx = self.selector.index(t, self.graphs.len(), self.seed);
        &self.graphs[idx]
    }

    /// Edge union of the graphs live at rounds `t .. t+b-1`.
    pub fn union_graph(&self, t: u64, b: usize) -> Result<DiGraph> {
        if b == 0 {
            return Err(Error::Graph("union window B must be at least 1".to_string()));
        }
        let mut acc = self.graph_at(t).clone();
        for k in 1..b {
            acc = acc.union(self.graph_at(t + k as u64))?;
        }
        Ok(acc)
    }

    /// Finite-horizon B-strong-connectivity check: every window
    /// `[t, t+b)` with `t + b <= horizon` must have a strongly connected
    /// union. Exact for periodic selectors once `horizon >= period + b`.
    pub fn verify_b(&self, b: usize, horizon: u64) -> Result<bool> {
        if b == 0 {
            return Err(Error::Graph("B must be at least 1".to_string()));
        }
        if horizon < b as u64 {
            return Err(Error::Graph(format!(
                "horizon {horizon} shorter than window B = {b}"
            )));
        }
        for t in 0..=(horizon - b as u64) {
            if !self.union_graph(t, b)?.is_strongly_connected() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Smallest `b <= cap` for which [`Self::verify_b`] holds, if any.
    pub fn find_b(&self, cap: usize, horizon: u64) -> Result<Option<usize>> {
        for b in 1..=cap {
            if horizon >= b as u64 && self.verify_b(b, horizon)? {
                return Ok(Some(b));
            }
        }
        Ok(None)
    }
}

/// The two four-node graphs used throughout the tests and shipped configs:
/// `g1` has edges 0->1, 1->2, 1->3 and `g2` has 3->1, 3->0, 2->3 (plus
/// self-loops). Neither is strongly connected; their union is.
pub fn demo_pair() -> (DiGraph, DiGraph) {
    let g1 = DiGraph::new(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
    let g2 = DiGraph::new(4, &[(3, 1), (3, 0), (2, 3)]).unwrap();
    (g1, g2)
}

/// Alternating schedule over [`demo_pair`] with `claimed_b = 2`.
pub fn demo_schedule() -> GraphSchedule {
    let (g1, g2) = demo_pair();
    GraphSchedule::new(vec![g1, g2], Selector::Alternate, Some(2)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_loops_enforced_and_counted() {
        let g = DiGraph::new(3, &[(0, 1)]).unwrap();
        for v in 0..3 {
            assert!(g.has_edge(v, v));
        }
        // d_0 counts the loop plus 0->1.
        assert_eq!(g.out_degree(0), 2);
        assert_eq!(g.out_degree(1), 1);
    }

    #[test]
    fn rejects_out_of_range_edges() {
        assert!(DiGraph::new(2, &[(0, 5)]).is_err());
        assert!(DiGraph::new(0, &[]).is_err());
    }

    #[test]
    fn union_of_demo_pair_contents() {
        let (g1, g2) = demo_pair();
        let u = g1.union(&g2).unwrap();
        for e in [(0, 1), (1, 2), (1, 3), (3, 1), (3, 0), (2, 3)] {
            assert!(u.has_edge(e.0, e.1), "missing {e:?}");
        }
        for v in 0..4 {
            assert!(u.has_edge(v, v));
        }
        assert_eq!(u.edges().count(), 10);
    }

    #[test]
    fn union_window_of_one_is_identity() {
        let s = demo_schedule();
        assert_eq!(s.union_graph(3, 1).unwrap(), *s.graph_at(3));
    }

    #[test]
    fn union_idempotent() {
        let s = demo_schedule();
        let u = s.union_graph(0, 2).unwrap();
        assert_eq!(u.union(s.graph_at(0)).unwrap(), u);
    }

    #[test]
    fn demo_graphs_not_strongly_connected_union_is() {
        let (g1, g2) = demo_pair();
        assert!(!g1.is_strongly_connected());
        assert!(!g2.is_strongly_connected());
        assert!(g1.union(&g2).unwrap().is_strongly_connected());
    }

    #[test]
    fn complete_graph_strongly_connected() {
        assert!(DiGraph::complete(3).unwrap().is_strongly_connected());
        assert!(DiGraph::new(1, &[]).unwrap().is_strongly_connected());
    }

    #[test]
    fn verify_b_on_demo_schedule() {
        let s = demo_schedule();
        assert!(s.verify_b(2, 100).unwrap());
        assert!(!s.verify_b(1, 100).unwrap());
        assert_eq!(s.find_b(8, 100).unwrap(), Some(2));
    }

    #[test]
    fn verify_b_static_complete() {
        let s = GraphSchedule::new(
            vec![DiGraph::complete(3).unwrap()],
            Selector::RoundRobin,
            Some(1),
        )
        .unwrap();
        assert!(s.verify_b(1, 50).unwrap());
    }

    #[test]
    fn mixing_weights_self_loop_only() {
        let g = DiGraph::new(2, &[]).unwrap();
        assert_eq!(g.mixing_weights(0), vec![(0, 1.0)]);
    }

    #[test]
    fn mixing_weights_demo_node_one() {
        // Node 1 in g1 sends to {1, 2, 3}: weight 1/3 each.
        let (g1, _) = demo_pair();
        let w = g1.mixing_weights(1);
        assert_eq!(w.len(), 3);
        for (to, wt) in w {
            assert!([1, 2, 3].contains(&to));
            assert!((wt - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mixing_matrix_column_sums() {
        let (g1, _) = demo_pair();
        let a = g1.mixing_matrix();
        for j in 0..4 {
            let col: f64 = (0..4).map(|i| a[i][j]).sum();
            assert!((col - 1.0).abs() <= 1e-15, "column {j} sums to {col}");
        }
    }

    #[test]
    fn seeded_random_selector_is_deterministic() {
        let (g1, g2) = demo_pair();
        let s = GraphSchedule::new(
            vec![g1, g2],
            Selector::SeededRandom {
                p: 0.5,
                seed: Some(9),
            },
            None,
        )
        .unwrap();
        let pick = |t: u64| -> usize {
            (0..2)
                .find(|&k| std::ptr::eq(s.graph_at(t), &s.graphs()[k]))
                .unwrap()
        };
        let a: Vec<usize> = (0..50).map(pick).collect();
        let b: Vec<usize> = (0..50).map(pick).collect();
        assert_eq!(a, b);
        // Both graphs appear.
        assert!(a.iter().any(|&k| k == 0) && a.iter().any(|&k| k == 1));
    }

    fn arbitrary_graph(n: usize, bits: u64) -> DiGraph {
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    if (bits >> (k % 64)) & 1 == 1 {
                        edges.push((i, j));
                    }
                    k += 1;
                }
            }
        }
        DiGraph::new(n, &edges).unwrap()
    }

    proptest! {
        #[test]
        fn column_stochastic_for_random_graphs(n in 1usize..7, bits in any::<u64>()) {
            let g = arbitrary_graph(n, bits);
            let a = g.mixing_matrix();
            for j in 0..n {
                let col: f64 = (0..n).map(|i| a[i][j]).sum();
                prop_assert!((col - 1.0).abs() <= 1e-15);
            }
        }

        #[test]
        fn verify_b_monotone_in_b(bits1 in any::<u64>(), bits2 in any::<u64>(), b in 1usize..5) {
            let s = GraphSchedule::new(
                vec![arbitrary_graph(4, bits1), arbitrary_graph(4, bits2)],
                Selector::RoundRobin,
                None,
            ).unwrap();
            let horizon = 40;
            if s.verify_b(b, horizon).unwrap() {
                for bb in b..=b + 3 {
                    prop_assert!(s.verify_b(bb, horizon).unwrap());
                }
            }
        }
    }
}
