//! Edge costs reflect circuit structure, not just statistics: conditioning a
//! leaf on a variable whose sum structure lies buried under intervening sums
//! duplicates everything in between, while conditioning on a variable whose
//! structure sits right above the leaf is cheap. A likelihood-only score
//! cannot see this difference; the dry-run cost prices it exactly.

use aclearn::bn::{BayesNet, Estimator};
use aclearn::circuit::{CostOutcome, LeafId};
use aclearn::{Circuit, Dataset};

fn chain_data(n: usize, rows: usize, seed: u64) -> Dataset {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut out = Vec::new();
    for _ in 0..rows {
        let mut row = vec![0u8; n];
        row[0] = (next() < 0.5) as u8;
        for v in 1..n {
            row[v] = if next() < 0.85 { row[v - 1] } else { 1 - row[v - 1] };
        }
        out.push(row);
    }
    Dataset::new(vec![2; n], out).unwrap()
}

fn edge_cost(c: &Circuit, leaf: LeafId, var: usize) -> i64 {
    match c.split_cost(leaf, var, None).unwrap() {
        CostOutcome::Exact(d) => d.edges,
        CostOutcome::AtLeastEdges(_) => unreachable!("no abort threshold given"),
    }
}

fn apply(bn: &mut BayesNet, c: &mut Circuit, data: &Dataset, leaf: LeafId, var: usize) -> Vec<LeafId> {
    let new_leaves = bn.apply_split_to_tree(leaf, var, data).unwrap();
    let thetas: Vec<Vec<f64>> = new_leaves.iter().map(|l| bn.leaf(*l).theta.clone()).collect();
    c.apply_split(leaf, var, &new_leaves, &thetas).unwrap();
    new_leaves
}

#[test]
fn every_split_costs_the_same_on_a_fresh_circuit() {
    // A product of marginals is fully symmetric: each split copies one
    // marginal block per value of the split variable, so with equal arities
    // every (leaf, variable) pair must price identically.
    let data = chain_data(4, 500, 3);
    let bn = BayesNet::fit_marginals(&data, Estimator::Laplace).unwrap();
    let c = Circuit::product_of_marginals(&bn.root_marginals().unwrap()).unwrap();
    let mut costs = Vec::new();
    for leaf in 0..4u32 {
        for var in 0..4usize {
            if leaf as usize != var {
                costs.push(edge_cost(&c, LeafId(leaf), var));
            }
        }
    }
    assert!(costs.iter().all(|&e| e == costs[0]), "costs: {costs:?}");
    assert!(costs[0] > 0);
}

#[test]
fn conditioning_on_a_buried_variable_costs_more() {
    // Learn the chain X0 -> X1 -> X2 -> X3 by hand: after the three splits
    // the circuit nests the X0 sum inside the X1 sum inside the X2 sum.
    let data = chain_data(4, 2000, 3);
    let mut bn = BayesNet::fit_marginals(&data, Estimator::Laplace).unwrap();
    let mut c = Circuit::product_of_marginals(&bn.root_marginals().unwrap()).unwrap();
    apply(&mut bn, &mut c, &data, LeafId(1), 0);
    apply(&mut bn, &mut c, &data, LeafId(2), 1);
    let x3_leaves = apply(&mut bn, &mut c, &data, LeafId(3), 2);

    // A leaf for (X3 | X2 = i) hangs directly inside branch i of the X2 sum.
    // Splitting it on X1 only copies that branch's X1 region; splitting it on
    // X0 must duplicate the whole intervening X1 structure per value of X0.
    for &leaf in &x3_leaves {
        let near = edge_cost(&c, leaf, 1);
        let deep = edge_cost(&c, leaf, 0);
        assert!(
            near < deep,
            "splitting on the adjacent variable ({near} edges) should undercut \
             the buried one ({deep} edges)"
        );
    }
}

#[test]
fn splitting_on_a_nested_variable_costs_more_than_reusing_the_top_sum() {
    // After one split the X0 sum is the top structure and X1's distributions
    // live inside its branches. Conditioning another leaf on X0 again copies
    // only small per-branch pieces; conditioning on X1 duplicates the X0 sum.
    let data = chain_data(4, 2000, 3);
    let mut bn = BayesNet::fit_marginals(&data, Estimator::Laplace).unwrap();
    let mut c = Circuit::product_of_marginals(&bn.root_marginals().unwrap()).unwrap();
    apply(&mut bn, &mut c, &data, LeafId(1), 0);

    let reuse_top = edge_cost(&c, LeafId(3), 0);
    let duplicate_nested = edge_cost(&c, LeafId(3), 1);
    assert!(
        reuse_top < duplicate_nested,
        "reusing the existing top-level sum ({reuse_top} edges) should undercut \
         duplicating the nested structure ({duplicate_nested} edges)"
    );
}
