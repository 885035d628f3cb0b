//! The Bayesian-network view of the model: one decision-tree CPD per
//! variable, each leaf a multinomial distribution estimated from the training
//! rows that reach it.
//!
//! The learner keeps this view and the arithmetic circuit in lockstep: tree
//! splits define likelihood gains and split validity; the circuit mirrors
//! every applied split structurally. Likelihoods, split bookkeeping and the
//! treewidth estimate live here; nothing in this module touches circuit
//! nodes.

use fixedbitset::FixedBitSet;

use crate::circuit::LeafId;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Var;

mod text;
mod treewidth;

pub(crate) use text::{read_bn, write_bn};
pub use treewidth::{treewidth_of_order, TreewidthEstimate};

/// How leaf multinomials are estimated from counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Add-one (Laplace) smoothing: (count + 1) / (total + arity). Always
    /// strictly positive, which the circuit's parameter nodes require.
    Laplace,
    /// Raw relative frequencies. Can produce zeros; building a circuit from
    /// such a distribution is rejected, so this mode is only usable on data
    /// where every value of every reached leaf is observed.
    MaximumLikelihood,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Laplace
    }
}

/// Estimates a leaf multinomial from value counts.
pub fn estimate_leaf_distribution(estimator: Estimator, counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    match estimator {
        Estimator::Laplace => {
            let denom = (total + counts.len() as u64) as f64;
            counts.iter().map(|&c| (c + 1) as f64 / denom).collect()
        }
        Estimator::MaximumLikelihood => {
            if total == 0 {
                let u = 1.0 / counts.len() as f64;
                return vec![u; counts.len()];
            }
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        }
    }
}

/// Count-weighted log-likelihood of one leaf: Σ_v count_v · ln θ_v with the
/// leaf's distribution re-estimated from the counts. Zero-count terms are
/// skipped so maximum-likelihood zeros don't produce NaN.
pub fn leaf_log_likelihood(estimator: Estimator, counts: &[u64]) -> f64 {
    let theta = estimate_leaf_distribution(estimator, counts);
    counts
        .iter()
        .zip(&theta)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &t)| c as f64 * t.ln())
        .sum()
}

#[derive(Clone, Debug)]
enum TreeNode {
    /// Decision on `var`; children indexed by its value.
    Interior { var: Var, children: Vec<usize> },
    Leaf { leaf: LeafId },
}

/// Decision-tree CPD of one variable.
#[derive(Clone, Debug)]
pub struct TreeCpd {
    nodes: Vec<TreeNode>,
    root: usize,
}

impl TreeCpd {
    fn single_leaf(leaf: LeafId) -> TreeCpd {
        TreeCpd {
            nodes: vec![TreeNode::Leaf { leaf }],
            root: 0,
        }
    }

    fn walk(&self, row: &[u8]) -> LeafId {
        let mut idx = self.root;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Interior { var, children } => idx = children[row[*var] as usize],
            }
        }
    }

    /// Number of leaves currently in the tree.
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// One leaf distribution: the multinomial for `var` in the context `path`.
#[derive(Clone, Debug)]
pub struct LeafInfo {
    pub var: Var,
    pub theta: Vec<f64>,
    pub counts: Vec<u64>,
    /// Conditioning context from the tree root, in split order.
    pub path: Vec<(Var, usize)>,
    /// Training rows that reach this leaf. Present when the network was fit
    /// to data in this process; empty after loading from a model file.
    pub rows: Vec<u32>,
    tree_node: usize,
}

impl LeafInfo {
    pub fn path_string(&self) -> String {
        if self.path.is_empty() {
            return "-".to_string();
        }
        self.path
            .iter()
            .map(|(v, val)| format!("X{v}={val}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// A Bayesian network with decision-tree CPDs.
#[derive(Clone, Debug)]
pub struct BayesNet {
    arities: Vec<usize>,
    cpds: Vec<TreeCpd>,
    /// Indexed by leaf id; `None` once a leaf has been split away.
    leaves: Vec<Option<LeafInfo>>,
    parents: Vec<FixedBitSet>,
    /// Transitive closure: descendants[i] = variables reachable from i along
    /// parent→child arcs. Rebuilt after every applied split.
    descendants: Vec<FixedBitSet>,
    children: Vec<Vec<Var>>,
    estimator: Estimator,
}

impl BayesNet {
    /// The empty-graph network: one single-leaf CPD per variable, fit to the
    /// data's column counts.
    pub fn fit_marginals(data: &Dataset, estimator: Estimator) -> Result<BayesNet> {
        if data.num_rows() == 0 {
            return Err(Error::Data("cannot fit a model to zero rows".into()));
        }
        let n = data.num_vars();
        let mut bn = BayesNet {
            arities: data.arities().to_vec(),
            cpds: Vec::with_capacity(n),
            leaves: Vec::with_capacity(n),
            parents: vec![FixedBitSet::with_capacity(n); n],
            descendants: vec![FixedBitSet::with_capacity(n); n],
            children: vec![Vec::new(); n],
            estimator,
        };
        let all_rows: Vec<u32> = (0..data.num_rows() as u32).collect();
        for var in 0..n {
            let mut counts = vec![0u64; data.arity(var)];
            for row in 0..data.num_rows() {
                counts[data.value(row, var) as usize] += 1;
            }
            let leaf_id = LeafId(bn.leaves.len() as u32);
            bn.cpds.push(TreeCpd::single_leaf(leaf_id));
            bn.leaves.push(Some(LeafInfo {
                var,
                theta: estimate_leaf_distribution(estimator, &counts),
                counts,
                path: Vec::new(),
                rows: all_rows.clone(),
                tree_node: 0,
            }));
        }
        Ok(bn)
    }

    pub fn num_vars(&self) -> usize {
        self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, var: Var) -> usize {
        self.arities[var]
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn cpd(&self, var: Var) -> &TreeCpd {
        &self.cpds[var]
    }

    pub fn parents(&self, var: Var) -> &FixedBitSet {
        &self.parents[var]
    }

    pub fn children_of(&self, var: Var) -> &[Var] {
        &self.children[var]
    }

    /// The leaf's info; panics on a retired (split-away) leaf id.
    pub fn leaf(&self, leaf: LeafId) -> &LeafInfo {
        self.leaves[leaf.index()]
            .as_ref()
            .expect("leaf id was retired by a split")
    }

    pub fn is_live(&self, leaf: LeafId) -> bool {
        self.leaves
            .get(leaf.index())
            .map(|l| l.is_some())
            .unwrap_or(false)
    }

    /// Live leaf ids in increasing id order.
    pub fn live_leaves(&self) -> impl Iterator<Item = LeafId> + '_ {
        self.leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_some())
            .map(|(i, _)| LeafId(i as u32))
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.iter().filter(|l| l.is_some()).count()
    }

    /// Leaf reached by a complete row for `var`'s CPD.
    pub fn leaf_for(&self, var: Var, row: &[u8]) -> LeafId {
        self.cpds[var].walk(row)
    }

    /// Marginals of the root leaves, in variable order, for building the
    /// initial circuit. Errors if any CPD has already been split.
    pub fn root_marginals(&self) -> Result<Vec<(LeafId, Vec<f64>)>> {
        (0..self.num_vars())
            .map(|var| match &self.cpds[var].nodes[self.cpds[var].root] {
                TreeNode::Leaf { leaf } => Ok((*leaf, self.leaf(*leaf).theta.clone())),
                TreeNode::Interior { .. } => Err(Error::Internal(
                    "root_marginals on an already-split network".into(),
                )),
            })
            .collect()
    }

    /// P(row) = Π_i θ_{leaf_i(row)}[row_i].
    pub fn joint_probability(&self, row: &[u8]) -> f64 {
        (0..self.num_vars())
            .map(|var| self.leaf(self.leaf_for(var, row)).theta[row[var] as usize])
            .product()
    }

    pub fn log_joint(&self, row: &[u8]) -> f64 {
        (0..self.num_vars())
            .map(|var| self.leaf(self.leaf_for(var, row)).theta[row[var] as usize].ln())
            .sum()
    }

    /// Σ over rows of ln P(row). Works for any dataset over the same
    /// variables (not just the training data).
    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        if data.arities() != self.arities() {
            return Err(Error::Data(
                "dataset does not match the model's variables/arities".into(),
            ));
        }
        Ok((0..data.num_rows())
            .map(|r| self.log_joint(data.row(r)))
            .sum())
    }

    /// Training-set log-likelihood from stored leaf counts:
    /// Σ over leaves of Σ_v count_v · ln θ_v. Equals `log_likelihood` on the
    /// training data.
    pub fn training_log_likelihood(&self) -> f64 {
        self.leaves
            .iter()
            .flatten()
            .map(|l| {
                l.counts
                    .iter()
                    .zip(&l.theta)
                    .filter(|(&c, _)| c > 0)
                    .map(|(&c, &t)| c as f64 * t.ln())
                    .sum::<f64>()
            })
            .sum()
    }

    /// Split validity: the split variable must differ from the leaf's
    /// variable, must not already label a tree ancestor of the leaf, and must
    /// not be a descendant of the leaf's variable in the network (the new arc
    /// would create a cycle).
    pub fn is_valid_split(&self, leaf: LeafId, var: Var) -> bool {
        if var >= self.num_vars() || !self.is_live(leaf) {
            return false;
        }
        let info = self.leaf(leaf);
        if var == info.var {
            return false;
        }
        if info.path.iter().any(|&(v, _)| v == var) {
            return false;
        }
        !self.descendants[info.var].contains(var)
    }

    /// Likelihood gain of splitting `leaf` on `var`: the summed leaf
    /// log-likelihoods of the per-value children minus the leaf's own.
    /// Local to the leaf's rows; independent of the rest of the model.
    pub fn likelihood_gain(&self, leaf: LeafId, var: Var, data: &Dataset) -> f64 {
        let info = self.leaf(leaf);
        let arity_split = self.arity(var);
        let arity_target = self.arity(info.var);
        let mut child_counts = vec![vec![0u64; arity_target]; arity_split];
        for &r in &info.rows {
            let row = data.row(r as usize);
            child_counts[row[var] as usize][row[info.var] as usize] += 1;
        }
        let children_ll: f64 = child_counts
            .iter()
            .map(|c| leaf_log_likelihood(self.estimator, c))
            .sum();
        children_ll - leaf_log_likelihood(self.estimator, &info.counts)
    }

    /// [`likelihood_gain`](Self::likelihood_gain) for every valid split
    /// variable of `leaf` at once, sharing one pass over the leaf's rows.
    /// Returns (variable, gain) pairs in ascending variable order.
    pub fn candidate_gains(&self, leaf: LeafId, data: &Dataset) -> Vec<(Var, f64)> {
        let info = self.leaf(leaf);
        let arity_target = self.arity(info.var);
        let valid: Vec<Var> = (0..self.num_vars())
            .filter(|&v| self.is_valid_split(leaf, v))
            .collect();
        if valid.is_empty() {
            return Vec::new();
        }
        let mut counts: Vec<Vec<u64>> = valid
            .iter()
            .map(|&v| vec![0u64; self.arity(v) * arity_target])
            .collect();
        for &r in &info.rows {
            let row = data.row(r as usize);
            let t = row[info.var] as usize;
            for (k, &v) in valid.iter().enumerate() {
                counts[k][row[v] as usize * arity_target + t] += 1;
            }
        }
        let base = leaf_log_likelihood(self.estimator, &info.counts);
        valid
            .iter()
            .zip(&counts)
            .map(|(&v, joint)| {
                let children_ll: f64 = joint
                    .chunks(arity_target)
                    .map(|c| leaf_log_likelihood(self.estimator, c))
                    .sum();
                (v, children_ll - base)
            })
            .collect()
    }

    /// Applies a valid split: retires `leaf`, grows the tree with one new
    /// leaf per value of `var`, partitions the rows and counts, re-estimates
    /// the children, adds the arc var → leaf.var, and rebuilds the
    /// descendant closure. Returns the new leaf ids indexed by value.
    pub fn apply_split_to_tree(
        &mut self,
        leaf: LeafId,
        var: Var,
        data: &Dataset,
    ) -> Result<Vec<LeafId>> {
        if !self.is_valid_split(leaf, var) {
            return Err(Error::InvalidSplit(format!(
                "split of leaf {} on variable {var} is invalid",
                leaf.0
            )));
        }
        let info = self
            .leaves[leaf.index()]
            .take()
            .expect("validity already checked");
        let target = info.var;
        let arity_split = self.arity(var);

        let mut child_rows: Vec<Vec<u32>> = vec![Vec::new(); arity_split];
        for &r in &info.rows {
            child_rows[data.value(r as usize, var) as usize].push(r);
        }

        let tree = &mut self.cpds[target];
        let mut new_ids = Vec::with_capacity(arity_split);
        let mut tree_children = Vec::with_capacity(arity_split);
        for (value, rows) in child_rows.into_iter().enumerate() {
            let mut counts = vec![0u64; self.arities[target]];
            for &r in &rows {
                counts[data.value(r as usize, target) as usize] += 1;
            }
            let mut path = info.path.clone();
            path.push((var, value));
            let node_idx = tree.nodes.len();
            let leaf_id = LeafId(self.leaves.len() as u32);
            tree.nodes.push(TreeNode::Leaf { leaf: leaf_id });
            tree_children.push(node_idx);
            self.leaves.push(Some(LeafInfo {
                var: target,
                theta: estimate_leaf_distribution(self.estimator, &counts),
                counts,
                path,
                rows,
                tree_node: node_idx,
            }));
            new_ids.push(leaf_id);
        }
        tree.nodes[info.tree_node] = TreeNode::Interior {
            var,
            children: tree_children,
        };
        self.parents[target].insert(var);
        if !self.children[var].contains(&target) {
            self.children[var].push(target);
        }
        self.rebuild_descendants();
        Ok(new_ids)
    }

    fn rebuild_descendants(&mut self) {
        let n = self.num_vars();
        for set in self.descendants.iter_mut() {
            set.clear();
        }
        // descendants[i] = reachable set along arcs i → child; simple
        // fixpoint, O(n²) per pass, fine for a few hundred variables.
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                for &c in &self.children[i] {
                    if !self.descendants[i].contains(c) {
                        self.descendants[i].insert(c);
                        changed = true;
                    }
                    // Without splitting borrows: union via a temporary.
                    let desc_c = self.descendants[c].clone();
                    let before = self.descendants[i].count_ones(..);
                    self.descendants[i].union_with(&desc_c);
                    if self.descendants[i].count_ones(..) != before {
                        changed = true;
                    }
                }
            }
        }
    }

    /// Min-fill treewidth estimate of the moralized graph; see
    /// [`treewidth`]. Returns the width and the elimination order used.
    pub fn estimate_treewidth_minfill(&self) -> TreewidthEstimate {
        treewidth::estimate_treewidth_minfill(self)
    }

    pub fn max_parents(&self) -> usize {
        self.parents.iter().map(|p| p.count_ones(..)).max().unwrap_or(0)
    }

    pub fn mean_parents(&self) -> f64 {
        if self.num_vars() == 0 {
            return 0.0;
        }
        self.parents
            .iter()
            .map(|p| p.count_ones(..) as f64)
            .sum::<f64>()
            / self.num_vars() as f64
    }
}
