//! Arithmetic circuit representation: a rooted DAG of sum, product, indicator
//! and parameter nodes computing a Bayesian network's network polynomial.
//!
//! Evaluation sets each indicator to 0/1 according to the evidence and runs
//! one bottom-up pass, so any marginal or conditional query costs time linear
//! in the number of edges. The learner rewrites circuits in place; node ids
//! are stable except across [`Circuit::garbage_collect`], which compacts the
//! arena.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::Var;

mod eval;
mod properties;
mod split;
pub(crate) mod text;

pub use eval::EvalStats;
pub use properties::{check_properties, PropertyReport, PropertyViolation, ScopeTable};
pub use split::{CostOutcome, InvalidationScopes, SplitApplied, SplitDeltas, SplitRegions};

/// Handle to a node in the circuit's arena. Invalidated by garbage collection
/// (the arena is compacted); never hold one across a mutation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Identifier of one decision-tree leaf distribution in the companion
/// Bayesian network. Assigned by the network, monotonically increasing, never
/// reused: a split retires the parent leaf's id and allocates fresh ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct LeafId(pub u32);

impl LeafId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
pub enum NodeKind {
    Sum,
    Product,
    /// I(var = value): evaluates to 1 when the evidence is consistent with
    /// `var = value`, else 0.
    Indicator { var: Var, value: usize },
    /// One entry of leaf distribution `leaf`: P(var = value | leaf context).
    Parameter {
        leaf: LeafId,
        var: Var,
        value: usize,
        weight: f64,
    },
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Indicator { .. } | NodeKind::Parameter { .. })
    }
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    children: Vec<NodeId>,
    /// Number of parents; maintained so orphan cascades can run without
    /// materializing parent lists.
    parent_count: u32,
}

/// An arithmetic circuit over discrete variables.
///
/// Structural invariants (checked by [`Circuit::validate`]):
/// * leaves (indicators, parameters) have no children; sums and products have
///   at least one child;
/// * a parent's child list contains no duplicates;
/// * exactly one indicator exists per (variable, value) — splits share them;
/// * parameter weights lie in (0, 1] and each leaf distribution's weights sum
///   to 1 ± 1e-12;
/// * every node is reachable from the root (after garbage collection).
#[derive(Clone, Debug)]
pub struct Circuit {
    arities: Vec<usize>,
    /// Prefix offsets into the flat (variable, value) indicator slot space.
    slot_offsets: Vec<usize>,
    nodes: Vec<Node>,
    root: NodeId,
    /// slot -> indicator node.
    indicators: Vec<NodeId>,
    /// leaf id -> parameter nodes indexed by value.
    params_by_leaf: HashMap<LeafId, Vec<NodeId>>,
    n_edges: u64,
    n_params: u64,
    /// Topological order, children before parents; drives evaluation sweeps.
    eval_order: Vec<NodeId>,
    /// Bumped on every mutation; lets split plans detect staleness.
    version: u64,
}

/// What a garbage collection removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GcReport {
    pub removed_nodes: usize,
    pub removed_edges: u64,
    pub removed_parameters: u64,
}

impl Circuit {
    /// Builds the product-of-marginals circuit: one sum per variable over
    /// (indicator × parameter) products, all joined under a product root.
    /// This is the circuit of the empty-graph Bayesian network whose CPDs are
    /// the given single-leaf marginals.
    pub fn product_of_marginals(marginals: &[(LeafId, Vec<f64>)]) -> Result<Circuit> {
        if marginals.is_empty() {
            return Err(Error::Data(
                "cannot build a circuit over zero variables".into(),
            ));
        }
        let arities: Vec<usize> = marginals.iter().map(|(_, p)| p.len()).collect();
        let mut c = Circuit::empty(arities);
        let mut sums = Vec::with_capacity(marginals.len());
        for (var, (leaf, probs)) in marginals.iter().enumerate() {
            check_distribution(&format!("marginal of variable {var}"), probs)?;
            let mut value_products = Vec::with_capacity(probs.len());
            for (value, &p) in probs.iter().enumerate() {
                let ind = c.add_indicator(var, value)?;
                let par = c.add_parameter(*leaf, var, value, p)?;
                value_products.push(c.add_product(vec![ind, par])?);
            }
            sums.push(c.add_sum(value_products)?);
        }
        c.root = if sums.len() == 1 {
            sums[0]
        } else {
            c.add_product(sums)?
        };
        c.rebuild_eval_order();
        debug_assert!(c.validate().is_ok());
        Ok(c)
    }

    fn empty(arities: Vec<usize>) -> Circuit {
        let mut slot_offsets = Vec::with_capacity(arities.len() + 1);
        let mut total = 0usize;
        for &a in &arities {
            slot_offsets.push(total);
            total += a;
        }
        slot_offsets.push(total);
        Circuit {
            indicators: vec![NodeId(u32::MAX); total],
            arities,
            slot_offsets,
            nodes: Vec::new(),
            root: NodeId(0),
            params_by_leaf: HashMap::new(),
            n_edges: 0,
            n_params: 0,
            eval_order: Vec::new(),
            version: 0,
        }
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

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Cached edge count n_e: total parent→child links.
    pub fn edge_count(&self) -> u64 {
        self.n_edges
    }

    /// Cached parameter-node count n_p.
    pub fn parameter_count(&self) -> u64 {
        self.n_params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn kind(&self, id: NodeId) -> &NodeKind {
        &self.nodes[id.index()].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.index()].children
    }

    pub fn parent_count(&self, id: NodeId) -> u32 {
        self.nodes[id.index()].parent_count
    }

    /// The unique indicator node for (var, value).
    pub fn indicator(&self, var: Var, value: usize) -> NodeId {
        self.indicators[self.slot(var, value)]
    }

    /// Parameter nodes of a leaf distribution, indexed by value; None if the
    /// leaf has no parameters in this circuit (e.g. it was split away).
    pub fn leaf_parameters(&self, leaf: LeafId) -> Option<&[NodeId]> {
        self.params_by_leaf.get(&leaf).map(|v| v.as_slice())
    }

    /// The leaf distributions whose parameters live in this circuit, in
    /// unspecified order.
    pub fn parameter_leaves(&self) -> impl Iterator<Item = LeafId> + '_ {
        self.params_by_leaf.keys().copied()
    }

    pub(crate) fn slot(&self, var: Var, value: usize) -> usize {
        debug_assert!(value < self.arities[var]);
        self.slot_offsets[var] + value
    }

    pub(crate) fn total_slots(&self) -> usize {
        *self.slot_offsets.last().unwrap()
    }

    pub(crate) fn eval_order(&self) -> &[NodeId] {
        &self.eval_order
    }

    // ---- construction primitives (used by the builder and split surgery) ----

    fn push_node(&mut self, kind: NodeKind, children: Vec<NodeId>) -> Result<NodeId> {
        let id = NodeId(
            u32::try_from(self.nodes.len())
                .map_err(|_| Error::Internal("node arena overflow".into()))?,
        );
        for (i, &c) in children.iter().enumerate() {
            if c.index() >= self.nodes.len() {
                return Err(Error::Internal(format!(
                    "child {c:?} of new node {id:?} does not exist"
                )));
            }
            if children[..i].contains(&c) {
                return Err(Error::Internal(format!(
                    "duplicate edge {id:?} -> {c:?}"
                )));
            }
        }
        self.n_edges += children.len() as u64;
        for &c in &children {
            self.nodes[c.index()].parent_count += 1;
        }
        self.nodes.push(Node {
            kind,
            children,
            parent_count: 0,
        });
        self.version += 1;
        Ok(id)
    }

    pub(crate) fn add_sum(&mut self, children: Vec<NodeId>) -> Result<NodeId> {
        if children.is_empty() {
            return Err(Error::Internal("sum node with no children".into()));
        }
        self.push_node(NodeKind::Sum, children)
    }

    pub(crate) fn add_product(&mut self, children: Vec<NodeId>) -> Result<NodeId> {
        if children.is_empty() {
            return Err(Error::Internal("product node with no children".into()));
        }
        self.push_node(NodeKind::Product, children)
    }

    pub(crate) fn add_indicator(&mut self, var: Var, value: usize) -> Result<NodeId> {
        let slot = self.slot(var, value);
        if self.indicators[slot] != NodeId(u32::MAX) {
            return Err(Error::Internal(format!(
                "indicator for variable {var} value {value} already exists"
            )));
        }
        let id = self.push_node(NodeKind::Indicator { var, value }, Vec::new())?;
        self.indicators[slot] = id;
        Ok(id)
    }

    pub(crate) fn add_parameter(
        &mut self,
        leaf: LeafId,
        var: Var,
        value: usize,
        weight: f64,
    ) -> Result<NodeId> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::InvalidProbability {
                what: format!("parameter of leaf {} value {value}", leaf.0),
                value: weight,
            });
        }
        let arity = self.arities[var];
        if value >= arity {
            return Err(Error::Internal(format!(
                "parameter value {value} out of range for variable {var}"
            )));
        }
        let id = self.push_node(
            NodeKind::Parameter {
                leaf,
                var,
                value,
                weight,
            },
            Vec::new(),
        )?;
        let entry = self
            .params_by_leaf
            .entry(leaf)
            .or_insert_with(|| vec![NodeId(u32::MAX); arity]);
        if entry[value] != NodeId(u32::MAX) {
            return Err(Error::Internal(format!(
                "parameter for leaf {} value {value} already exists",
                leaf.0
            )));
        }
        entry[value] = id;
        self.n_params += 1;
        Ok(id)
    }

    /// Replaces a mutual ancestor's (n_V, n_D) child pair with the single new
    /// sum node: n_V's position takes `replacement`, n_D is removed. Net edge
    /// change −1.
    pub(crate) fn splice_children(
        &mut self,
        parent: NodeId,
        drop_a: NodeId,
        drop_b: NodeId,
        replacement: NodeId,
    ) -> Result<()> {
        if replacement.index() >= self.nodes.len() {
            return Err(Error::Internal("splice replacement does not exist".into()));
        }
        let kids = &self.nodes[parent.index()].children;
        let pos_a = kids.iter().position(|&c| c == drop_a);
        let pos_b = kids.iter().position(|&c| c == drop_b);
        let (Some(pos_a), Some(pos_b)) = (pos_a, pos_b) else {
            return Err(Error::Internal(format!(
                "splice: {drop_a:?}/{drop_b:?} are not children of {parent:?}"
            )));
        };
        if kids.contains(&replacement) {
            return Err(Error::Internal(format!(
                "duplicate edge {parent:?} -> {replacement:?}"
            )));
        }
        let kids = &mut self.nodes[parent.index()].children;
        kids[pos_a] = replacement;
        kids.remove(pos_b);
        self.nodes[drop_a.index()].parent_count -= 1;
        self.nodes[drop_b.index()].parent_count -= 1;
        self.nodes[replacement.index()].parent_count += 1;
        self.n_edges -= 1;
        self.version += 1;
        Ok(())
    }

    pub(crate) fn rebuild_eval_order(&mut self) {
        self.eval_order.clear();
        self.eval_order.reserve(self.nodes.len());
        // Iterative post-order DFS from the root; children are appended
        // before their parents, which is exactly evaluation order.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<(NodeId, usize)> = vec![(self.root, 0)];
        seen[self.root.index()] = true;
        while let Some(&mut (id, ref mut next)) = stack.last_mut() {
            let kids = &self.nodes[id.index()].children;
            if *next < kids.len() {
                let child = kids[*next];
                *next += 1;
                if !seen[child.index()] {
                    seen[child.index()] = true;
                    stack.push((child, 0));
                }
            } else {
                self.eval_order.push(id);
                stack.pop();
            }
        }
    }

    // ---- counting and collection ----

    /// Recounts edges by traversal from the root — the oracle the cached
    /// [`Circuit::edge_count`] must always match.
    pub fn count_edges(&self) -> u64 {
        let mut total = 0u64;
        self.for_each_reachable(|node| total += node.children.len() as u64);
        total
    }

    /// Recounts live parameter nodes by traversal from the root.
    pub fn count_parameters(&self) -> u64 {
        let mut total = 0u64;
        self.for_each_reachable(|node| {
            if matches!(node.kind, NodeKind::Parameter { .. }) {
                total += 1;
            }
        });
        total
    }

    fn for_each_reachable<F: FnMut(&Node)>(&self, mut f: F) {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        seen[self.root.index()] = true;
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id.index()];
            f(node);
            for &c in &node.children {
                if !seen[c.index()] {
                    seen[c.index()] = true;
                    stack.push(c);
                }
            }
        }
    }

    /// Removes every node unreachable from the root and compacts the arena
    /// (stable order). Node ids taken before the call are invalid afterwards
    /// whenever anything was removed.
    pub fn garbage_collect(&mut self) -> GcReport {
        let mut reachable = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        reachable[self.root.index()] = true;
        let mut live = 0usize;
        while let Some(id) = stack.pop() {
            live += 1;
            for &c in &self.nodes[id.index()].children {
                if !reachable[c.index()] {
                    reachable[c.index()] = true;
                    stack.push(c);
                }
            }
        }
        if live == self.nodes.len() {
            return GcReport::default();
        }

        let mut report = GcReport {
            removed_nodes: self.nodes.len() - live,
            ..GcReport::default()
        };
        // Count what dies and fix refcounts of surviving children of dead
        // parents (a reachable child can lose unreachable parents).
        for (i, node) in self.nodes.iter().enumerate() {
            if reachable[i] {
                continue;
            }
            report.removed_edges += node.children.len() as u64;
            if matches!(node.kind, NodeKind::Parameter { .. }) {
                report.removed_parameters += 1;
            }
        }
        let mut remap: Vec<NodeId> = vec![NodeId(u32::MAX); self.nodes.len()];
        let mut next = 0u32;
        for (i, &keep) in reachable.iter().enumerate() {
            if keep {
                remap[i] = NodeId(next);
                next += 1;
            }
        }
        let old_nodes = std::mem::take(&mut self.nodes);
        self.nodes.reserve(live);
        for (i, mut node) in old_nodes.into_iter().enumerate() {
            if !reachable[i] {
                continue;
            }
            node.parent_count = 0;
            for c in node.children.iter_mut() {
                *c = remap[c.index()];
            }
            self.nodes.push(node);
        }
        // Recompute parent counts from the surviving edges.
        for i in 0..self.nodes.len() {
            for k in 0..self.nodes[i].children.len() {
                let c = self.nodes[i].children[k];
                self.nodes[c.index()].parent_count += 1;
            }
        }
        self.root = remap[self.root.index()];
        for slot in self.indicators.iter_mut() {
            let new = remap[slot.index()];
            debug_assert!(new != NodeId(u32::MAX), "indicator became unreachable");
            *slot = new;
        }
        self.params_by_leaf.retain(|_, ids| {
            let keep = ids.iter().any(|id| remap[id.index()] != NodeId(u32::MAX));
            if keep {
                for id in ids.iter_mut() {
                    *id = remap[id.index()];
                }
            }
            keep
        });
        self.n_edges -= report.removed_edges;
        self.n_params -= report.removed_parameters;
        self.version += 1;
        self.rebuild_eval_order();
        debug_assert_eq!(self.n_edges, self.count_edges());
        debug_assert_eq!(self.n_params, self.count_parameters());
        report
    }

    /// Full structural validation; used by tests and after loading from text.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Internal(msg));
        if self.nodes.is_empty() {
            return fail("empty circuit".into());
        }
        if self.root.index() >= self.nodes.len() {
            return fail("root out of range".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.kind {
                NodeKind::Indicator { var, value } | NodeKind::Parameter { var, value, .. }
                    if *var >= self.arities.len() || *value >= self.arities[*var] =>
                {
                    return fail(format!("node {i}: variable/value out of range"));
                }
                _ => {}
            }
            if node.kind.is_leaf() {
                if !node.children.is_empty() {
                    return fail(format!("leaf node {i} has children"));
                }
            } else if node.children.is_empty() {
                return fail(format!("interior node {i} has no children"));
            }
            for (j, &c) in node.children.iter().enumerate() {
                if c.index() >= self.nodes.len() {
                    return fail(format!("node {i}: child out of range"));
                }
                if node.children[..j].contains(&c) {
                    return fail(format!("node {i}: duplicate edge to {:?}", c));
                }
            }
            if let NodeKind::Parameter { weight, .. } = node.kind {
                if !(weight > 0.0 && weight <= 1.0) {
                    return fail(format!("node {i}: parameter weight {weight} out of (0, 1]"));
                }
            }
        }
        // Acyclicity + full reachability: the eval order must cover every
        // node exactly once, children listed before parents.
        if self.eval_order.len() != self.nodes.len() {
            return fail(format!(
                "{} of {} nodes unreachable from root (run garbage_collect)",
                self.nodes.len() - self.eval_order.len(),
                self.nodes.len()
            ));
        }
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (i, &id) in self.eval_order.iter().enumerate() {
            pos[id.index()] = i;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            for &c in &node.children {
                if pos[c.index()] >= pos[i] {
                    return fail(format!("node {i}: not topologically ordered (cycle?)"));
                }
            }
        }
        for (slot, &id) in self.indicators.iter().enumerate() {
            match self.nodes.get(id.index()).map(|n| &n.kind) {
                Some(&NodeKind::Indicator { var, value }) if self.slot(var, value) == slot => {}
                _ => return fail(format!("indicator index broken at slot {slot}")),
            }
        }
        for (leaf, ids) in &self.params_by_leaf {
            let mut sum = 0.0;
            for (value, &id) in ids.iter().enumerate() {
                match self.nodes.get(id.index()).map(|n| &n.kind) {
                    Some(&NodeKind::Parameter {
                        leaf: l,
                        value: v,
                        weight,
                        ..
                    }) if l == *leaf && v == value => sum += weight,
                    _ => {
                        return fail(format!(
                            "parameter index broken for leaf {} value {value}",
                            leaf.0
                        ))
                    }
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                return fail(format!(
                    "leaf {} weights sum to {sum}, expected 1",
                    leaf.0
                ));
            }
        }
        if self.n_edges != self.count_edges() {
            return fail(format!(
                "cached edge count {} != recount {}",
                self.n_edges,
                self.count_edges()
            ));
        }
        if self.n_params != self.count_parameters() {
            return fail(format!(
                "cached parameter count {} != recount {}",
                self.n_params,
                self.count_parameters()
            ));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let mut count = 0u32;
            for other in &self.nodes {
                count += other.children.iter().filter(|&&c| c.index() == i).count() as u32;
            }
            if count != node.parent_count {
                return fail(format!(
                    "node {i}: parent_count {} != actual {count}",
                    node.parent_count
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(what: &str, probs: &[f64]) -> Result<()> {
    if probs.len() < 2 {
        return Err(Error::Data(format!("{what}: arity must be at least 2")));
    }
    for &p in probs {
        if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
            return Err(Error::InvalidProbability {
                what: what.into(),
                value: p,
            });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Data(format!(
            "{what}: probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Per-(variable, value) indicator settings for evaluation: a partial
/// assignment. All-ones for a variable sums it out; exactly-one observes it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evidence {
    arities: Vec<usize>,
    offsets: Vec<usize>,
    bits: Vec<bool>,
}

impl Evidence {
    /// No observations: every indicator 1, i.e. every variable summed out.
    pub fn empty(arities: &[usize]) -> Evidence {
        let mut offsets = Vec::with_capacity(arities.len() + 1);
        let mut total = 0;
        for &a in arities {
            offsets.push(total);
            total += a;
        }
        offsets.push(total);
        Evidence {
            arities: arities.to_vec(),
            offsets,
            bits: vec![true; total],
        }
    }

    /// Complete assignment: every variable observed at the row's value.
    pub fn from_assignment(arities: &[usize], row: &[u8]) -> Result<Evidence> {
        if row.len() != arities.len() {
            return Err(Error::Data(format!(
                "assignment has {} values, circuit has {} variables",
                row.len(),
                arities.len()
            )));
        }
        let mut ev = Evidence::empty(arities);
        for (var, &value) in row.iter().enumerate() {
            ev.observe(var, value as usize)?;
        }
        Ok(ev)
    }

    /// Observe `var = value`: that indicator 1, the variable's others 0.
    pub fn observe(&mut self, var: Var, value: usize) -> Result<()> {
        self.check(var, value)?;
        let base = self.offsets[var];
        for v in 0..self.arities[var] {
            self.bits[base + v] = v == value;
        }
        Ok(())
    }

    /// Forget any observation of `var` (all its indicators back to 1).
    pub fn sum_out(&mut self, var: Var) -> Result<()> {
        self.check(var, 0)?;
        let base = self.offsets[var];
        for v in 0..self.arities[var] {
            self.bits[base + v] = true;
        }
        Ok(())
    }

    pub fn is_set(&self, var: Var, value: usize) -> bool {
        self.bits[self.offsets[var] + value]
    }

    pub fn num_vars(&self) -> usize {
        self.arities.len()
    }

    pub(crate) fn matches(&self, arities: &[usize]) -> bool {
        self.arities == arities
    }

    fn check(&self, var: Var, value: usize) -> Result<()> {
        if var >= self.arities.len() {
            return Err(Error::Data(format!("unknown variable {var}")));
        }
        if value >= self.arities[var] {
            return Err(Error::Data(format!(
                "value {value} out of range for variable {var} (arity {})",
                self.arities[var]
            )));
        }
        Ok(())
    }
}
