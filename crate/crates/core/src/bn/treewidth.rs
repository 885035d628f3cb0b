//! Min-fill treewidth estimate on the moralized graph.
//!
//! Moralize (connect each variable to its parents and its parents to each
//! other, drop directions), then repeatedly eliminate the vertex whose
//! neighborhood needs the fewest fill-in edges, connecting its remaining
//! neighbors. The largest clique touched (eliminated vertex plus remaining
//! neighbors) minus one is the width; the order is kept as a witness that
//! can be replayed to reproduce the number.

use fixedbitset::FixedBitSet;

use super::BayesNet;
use crate::Var;

/// Result of the min-fill heuristic: an upper bound on treewidth plus the
/// elimination order that achieves it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreewidthEstimate {
    pub width: usize,
    pub order: Vec<Var>,
}

fn moral_graph(bn: &BayesNet) -> Vec<FixedBitSet> {
    let n = bn.num_vars();
    let mut adj = vec![FixedBitSet::with_capacity(n); n];
    for i in 0..n {
        let parents: Vec<Var> = bn.parents(i).ones().collect();
        for &p in &parents {
            adj[i].insert(p);
            adj[p].insert(i);
        }
        for (a, &p) in parents.iter().enumerate() {
            for &q in &parents[a + 1..] {
                adj[p].insert(q);
                adj[q].insert(p);
            }
        }
    }
    adj
}

fn eliminate(adj: &mut [FixedBitSet], remaining: &mut FixedBitSet, v: Var) -> usize {
    let neighbors: Vec<Var> = adj[v]
        .ones()
        .filter(|&u| remaining.contains(u))
        .collect();
    for (a, &p) in neighbors.iter().enumerate() {
        for &q in &neighbors[a + 1..] {
            adj[p].insert(q);
            adj[q].insert(p);
        }
    }
    remaining.remove(v);
    neighbors.len() + 1
}

fn fill_in_count(adj: &[FixedBitSet], remaining: &FixedBitSet, v: Var) -> usize {
    let neighbors: Vec<Var> = adj[v]
        .ones()
        .filter(|&u| remaining.contains(u))
        .collect();
    let mut missing = 0;
    for (a, &p) in neighbors.iter().enumerate() {
        for &q in &neighbors[a + 1..] {
            if !adj[p].contains(q) {
                missing += 1;
            }
        }
    }
    missing
}

pub(super) fn estimate_treewidth_minfill(bn: &BayesNet) -> TreewidthEstimate {
    let n = bn.num_vars();
    let mut adj = moral_graph(bn);
    let mut remaining = FixedBitSet::with_capacity(n);
    remaining.insert_range(..);
    let mut order = Vec::with_capacity(n);
    let mut max_clique = 0usize;
    for _ in 0..n {
        // Fewest fill-in edges, ties broken by lowest index.
        let v = remaining
            .ones()
            .min_by_key(|&v| (fill_in_count(&adj, &remaining, v), v))
            .expect("remaining is non-empty");
        max_clique = max_clique.max(eliminate(&mut adj, &mut remaining, v));
        order.push(v);
    }
    TreewidthEstimate {
        width: max_clique.saturating_sub(1),
        order,
    }
}

/// Replays an elimination order on the moral graph and returns the width it
/// induces. `estimate_treewidth_minfill`'s own order reproduces its width.
pub fn treewidth_of_order(bn: &BayesNet, order: &[Var]) -> usize {
    let n = bn.num_vars();
    assert_eq!(order.len(), n, "order must cover every variable once");
    let mut adj = moral_graph(bn);
    let mut remaining = FixedBitSet::with_capacity(n);
    remaining.insert_range(..);
    let mut max_clique = 0usize;
    for &v in order {
        assert!(remaining.contains(v), "variable {v} eliminated twice");
        max_clique = max_clique.max(eliminate(&mut adj, &mut remaining, v));
    }
    max_clique.saturating_sub(1)
}
