//! Incremental circuit rewriting for decision-tree splits.
//!
//! Splitting leaf distribution D on variable V rewrites the circuit in place
//! instead of recompiling it. The analysis flags every node that is an
//! ancestor of D's parameters (the D side) or of V's indicators (the V side).
//! Nodes flagged for both sides with no both-flagged child are the *mutual
//! ancestors*; everything single-flagged lies strictly below them and is
//! copied once per value of V, with three rewrites inside the copies for
//! value i: the indicator V=i is absorbed, branches inconsistent with V=i
//! are dropped from sums, and D's parameters are replaced by the new
//! per-value leaf parameters. Each mutual ancestor then swaps its (V-side,
//! D-side) child pair for a sum over the per-value products, and garbage
//! collection removes the detached originals.
//!
//! The same walk runs in two modes: a counting dry run (with an optional
//! early abort once a lower bound on the edge growth exceeds a threshold)
//! and the materializing application. Their results must agree exactly;
//! the learner treats any mismatch as an internal error.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

use super::{Circuit, GcReport, LeafId, NodeId, NodeKind};
use crate::error::{Error, Result};
use crate::Var;

/// Net structural change of one split (after garbage collection).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplitDeltas {
    pub nodes: i64,
    pub edges: i64,
    pub params: i64,
}

/// Outcome of a cost dry run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostOutcome {
    Exact(SplitDeltas),
    /// The walk aborted early; the true edge delta is at least this much.
    AtLeastEdges(i64),
}

/// The regions a split would touch, for inspection and tests.
#[derive(Clone, Debug)]
pub struct SplitRegions {
    /// Minimal nodes above both the leaf's parameters and the variable's
    /// indicators. Always products in circuits built by this crate.
    pub mutual_ancestors: Vec<NodeId>,
    /// Interior nodes flagged for exactly one side; copied once per value.
    pub single_flagged: Vec<NodeId>,
    /// Per mutual ancestor: the values of the split variable below it.
    pub covered_values: Vec<Vec<usize>>,
}

/// What an applied split changed.
#[derive(Clone, Debug)]
pub struct SplitApplied {
    pub deltas: SplitDeltas,
    pub gc: GcReport,
    /// Mutual ancestors that covered only a strict subset of the split
    /// variable's values. This happens when earlier splits on the same
    /// variable left the leaf's distribution shared under per-value branches:
    /// each branch is then its own mutual ancestor seeing just its value, and
    /// the per-ancestor pieces jointly rebuild the full distribution (the
    /// completeness check in `apply_split` enforces that).
    pub partial_coverage_events: u64,
}

struct Flags {
    arity_v: usize,
    /// Ancestor-or-self of one of D's parameters.
    is_d: FixedBitSet,
    /// Ancestor-or-self of any of V's indicators.
    is_v: FixedBitSet,
    /// node * arity_v + value: ancestor-or-self of indicator V=value.
    anc: FixedBitSet,
}

impl Flags {
    fn covers(&self, n: NodeId, value: usize) -> bool {
        self.anc.contains(n.index() * self.arity_v + value)
    }
}

struct MutualAncestor {
    node: NodeId,
    n_v: NodeId,
    n_d: NodeId,
    covered: Vec<usize>,
}

struct Analysis {
    flags: Flags,
    mas: Vec<MutualAncestor>,
    /// The variable whose distribution D describes (for new parameters).
    target: Var,
    /// D's parameter count = the target variable's arity.
    target_arity: usize,
}

fn analyze(c: &Circuit, leaf: LeafId, var: Var) -> Result<Analysis> {
    if var >= c.num_vars() {
        return Err(Error::InvalidSplit(format!("variable {var} out of range")));
    }
    let params = c
        .leaf_parameters(leaf)
        .ok_or_else(|| Error::InvalidSplit(format!("leaf {} not in circuit", leaf.0)))?;
    let NodeKind::Parameter { var: target, .. } = c.nodes[params[0].index()].kind else {
        return Err(Error::Internal("parameter index broken".into()));
    };
    if target == var {
        return Err(Error::InvalidSplit(format!(
            "cannot split a distribution of variable {var} on itself"
        )));
    }
    let n = c.nodes.len();
    let arity_v = c.arity(var);
    let mut flags = Flags {
        arity_v,
        is_d: FixedBitSet::with_capacity(n),
        is_v: FixedBitSet::with_capacity(n),
        anc: FixedBitSet::with_capacity(n * arity_v),
    };
    for &p in params {
        flags.is_d.insert(p.index());
    }
    for value in 0..arity_v {
        let ind = c.indicator(var, value);
        flags.is_v.insert(ind.index());
        flags.anc.insert(ind.index() * arity_v + value);
    }
    // Children precede parents in eval order, so one sweep propagates the
    // flags to all ancestors.
    for &id in &c.eval_order {
        let x = id.index();
        for k in 0..c.nodes[x].children.len() {
            let ch = c.nodes[x].children[k].index();
            if flags.is_d.contains(ch) {
                flags.is_d.insert(x);
            }
            if flags.is_v.contains(ch) {
                flags.is_v.insert(x);
                for value in 0..arity_v {
                    if flags.anc.contains(ch * arity_v + value) {
                        flags.anc.insert(x * arity_v + value);
                    }
                }
            }
        }
    }

    let mut both = FixedBitSet::with_capacity(n);
    let mut mas = Vec::new();
    for &id in &c.eval_order {
        let x = id.index();
        if !(flags.is_d.contains(x) && flags.is_v.contains(x)) {
            continue;
        }
        both.insert(x);
        let node = &c.nodes[x];
        if node.children.iter().any(|ch| both.contains(ch.index())) {
            continue; // interior of the joint region, not minimal
        }
        if !matches!(node.kind, NodeKind::Product) {
            return Err(Error::Internal(format!(
                "mutual ancestor {id:?} is not a product; circuit is outside \
                 the smooth/decomposable family"
            )));
        }
        let mut n_v = None;
        let mut n_d = None;
        for &ch in &node.children {
            if flags.is_v.contains(ch.index()) {
                if n_v.replace(ch).is_some() {
                    return Err(Error::Internal(format!(
                        "mutual ancestor {id:?} has two children mentioning \
                         the split variable (not decomposable)"
                    )));
                }
            }
            if flags.is_d.contains(ch.index()) {
                if n_d.replace(ch).is_some() {
                    return Err(Error::Internal(format!(
                        "mutual ancestor {id:?} has two children carrying the \
                         split distribution (not decomposable)"
                    )));
                }
            }
        }
        let (Some(n_v), Some(n_d)) = (n_v, n_d) else {
            return Err(Error::Internal(format!(
                "mutual ancestor {id:?} lost a side"
            )));
        };
        debug_assert_ne!(n_v, n_d, "a shared child would be both-flagged");
        let covered: Vec<usize> = (0..arity_v).filter(|&v| flags.covers(id, v)).collect();
        debug_assert!(!covered.is_empty());
        mas.push(MutualAncestor {
            node: id,
            n_v,
            n_d,
            covered,
        });
    }
    if mas.is_empty() {
        return Err(Error::Internal(
            "split has no mutual ancestor; the circuit root should carry both sides".into(),
        ));
    }
    Ok(Analysis {
        flags,
        mas,
        target,
        target_arity: params.len(),
    })
}

/// How one child of a copied node is treated in the copy for value `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ChildClass {
    /// The indicator V=i itself: absorbed (the enclosing per-value product
    /// already asserts it). Only legal under a product.
    Absorbed,
    /// Mentions V but is inconsistent with V=i: removed. Only legal under a
    /// sum, where it is the deterministic branch not taken.
    Dropped,
    /// One of D's parameters; replaced by the new leaf's parameter for this
    /// target value.
    DistParam(usize),
    /// Outside both regions: shared with the original circuit as-is.
    External,
    /// Single-flagged interior: copied (memoized per value).
    FlaggedInterior,
}

fn classify(c: &Circuit, flags: &Flags, leaf: LeafId, var: Var, i: usize, child: NodeId) -> ChildClass {
    match c.nodes[child.index()].kind {
        NodeKind::Indicator { var: w, value } if w == var => {
            if value == i {
                ChildClass::Absorbed
            } else {
                ChildClass::Dropped
            }
        }
        NodeKind::Parameter { leaf: l, value, .. } if l == leaf => ChildClass::DistParam(value),
        _ => {
            let x = child.index();
            if flags.is_v.contains(x) && !flags.covers(child, i) {
                ChildClass::Dropped
            } else if flags.is_v.contains(x) || flags.is_d.contains(x) {
                debug_assert!(!c.nodes[x].kind.is_leaf());
                ChildClass::FlaggedInterior
            } else {
                ChildClass::External
            }
        }
    }
}

fn class_error(parent_is_sum: bool, class: ChildClass) -> Option<Error> {
    match (class, parent_is_sum) {
        (ChildClass::Absorbed, true) => Some(Error::Internal(
            "indicator of the split variable directly under a sum in the copy region".into(),
        )),
        (ChildClass::Dropped, false) => Some(Error::Internal(
            "factor inconsistent with the conditioned value under a product".into(),
        )),
        _ => None,
    }
}

/// Exposes the regions a split of `leaf` on `var` would touch.
impl Circuit {
    pub fn split_regions(&self, leaf: LeafId, var: Var) -> Result<SplitRegions> {
        let a = analyze(self, leaf, var)?;
        let single_flagged = self
            .eval_order
            .iter()
            .copied()
            .filter(|id| {
                let x = id.index();
                if self.nodes[x].kind.is_leaf() {
                    return false;
                }
                (a.flags.is_d.contains(x) || a.flags.is_v.contains(x))
                    && !(a.flags.is_d.contains(x) && a.flags.is_v.contains(x))
            })
            .collect();
        Ok(SplitRegions {
            mutual_ancestors: a.mas.iter().map(|m| m.node).collect(),
            single_flagged,
            covered_values: a.mas.iter().map(|m| m.covered.clone()).collect(),
        })
    }

    /// Counts the structural change a split would cause without materializing
    /// it. With `abort_above_edges` set, the walk stops as soon as a proven
    /// lower bound on the edge delta exceeds the threshold: removals are
    /// overcounted first (a refcount cascade that ignores the re-referencing
    /// done by copies), so `additions − overcount` only ever undershoots the
    /// true delta.
    pub fn split_cost(
        &self,
        leaf: LeafId,
        var: Var,
        abort_above_edges: Option<f64>,
    ) -> Result<CostOutcome> {
        let a = analyze(self, leaf, var)?;
        let n = self.nodes.len();
        let arity_v = a.flags.arity_v;

        // Parents each spliced child loses, then the detach overcount.
        let mut splice_loss = vec![0u32; n];
        for ma in &a.mas {
            splice_loss[ma.n_v.index()] += 1;
            splice_loss[ma.n_d.index()] += 1;
        }
        let removal_overcount_edges: i64 = if abort_above_edges.is_some() {
            let mut loss = splice_loss.clone();
            let mut dead = FixedBitSet::with_capacity(n);
            let mut queue: Vec<NodeId> = Vec::new();
            for ma in &a.mas {
                for side in [ma.n_v, ma.n_d] {
                    let x = side.index();
                    if !dead.contains(x) && loss[x] == self.nodes[x].parent_count {
                        dead.insert(x);
                        queue.push(side);
                    }
                }
            }
            let mut removed = 2 * a.mas.len() as i64;
            while let Some(id) = queue.pop() {
                for &ch in &self.nodes[id.index()].children {
                    removed += 1;
                    let x = ch.index();
                    loss[x] += 1;
                    if !dead.contains(x) && ch != self.root && loss[x] == self.nodes[x].parent_count
                    {
                        dead.insert(x);
                        queue.push(ch);
                    }
                }
            }
            removed
        } else {
            0
        };

        // Stream the additions, mirroring apply_split's construction exactly.
        let mut visited = FixedBitSet::with_capacity(n * arity_v);
        let mut param_made = FixedBitSet::with_capacity(arity_v * a.target_arity);
        let mut added_parents: HashMap<NodeId, u32> = HashMap::new();
        let mut adds_nodes: i64 = 0;
        let mut adds_edges: i64 = 0;
        let mut adds_params: i64 = 0;
        let mut stack: Vec<NodeId> = Vec::new();

        macro_rules! abort_check {
            () => {
                if let Some(thr) = abort_above_edges {
                    let lower_bound = adds_edges - removal_overcount_edges;
                    if (lower_bound as f64) > thr {
                        return Ok(CostOutcome::AtLeastEdges(lower_bound));
                    }
                }
            };
        }

        for ma in &a.mas {
            adds_nodes += 1; // the sum over per-value products
            adds_edges += 1; // mutual ancestor -> new sum
            for &i in &ma.covered {
                adds_nodes += 1; // per-value product
                adds_edges += 2; // sum -> product, product -> indicator V=i
                *added_parents.entry(self.indicator(var, i)).or_default() += 1;

                for (side, is_v_side) in [(ma.n_v, true), (ma.n_d, false)] {
                    match classify(self, &a.flags, leaf, var, i, side) {
                        ChildClass::Absorbed => {
                            debug_assert!(is_v_side);
                        }
                        ChildClass::DistParam(j) => {
                            debug_assert!(!is_v_side);
                            adds_edges += 1;
                            if !param_made.contains(i * a.target_arity + j) {
                                param_made.insert(i * a.target_arity + j);
                                adds_nodes += 1;
                                adds_params += 1;
                            }
                        }
                        ChildClass::FlaggedInterior => {
                            adds_edges += 1;
                            if !visited.contains(side.index() * arity_v + i) {
                                visited.insert(side.index() * arity_v + i);
                                stack.push(side);
                            }
                        }
                        other => {
                            return Err(Error::Internal(format!(
                                "unexpected {other:?} side child of a mutual ancestor"
                            )))
                        }
                    }
                }

                // Count the copied region for value i.
                while let Some(id) = stack.pop() {
                    adds_nodes += 1;
                    let is_sum = matches!(self.nodes[id.index()].kind, NodeKind::Sum);
                    let mut kept = 0usize;
                    for k in 0..self.nodes[id.index()].children.len() {
                        let ch = self.nodes[id.index()].children[k];
                        let class = classify(self, &a.flags, leaf, var, i, ch);
                        if let Some(e) = class_error(is_sum, class) {
                            return Err(e);
                        }
                        match class {
                            ChildClass::Absorbed | ChildClass::Dropped => {}
                            ChildClass::DistParam(j) => {
                                kept += 1;
                                adds_edges += 1;
                                if !param_made.contains(i * a.target_arity + j) {
                                    param_made.insert(i * a.target_arity + j);
                                    adds_nodes += 1;
                                    adds_params += 1;
                                }
                            }
                            ChildClass::External => {
                                kept += 1;
                                adds_edges += 1;
                                *added_parents.entry(ch).or_default() += 1;
                            }
                            ChildClass::FlaggedInterior => {
                                kept += 1;
                                adds_edges += 1;
                                if !visited.contains(ch.index() * arity_v + i) {
                                    visited.insert(ch.index() * arity_v + i);
                                    stack.push(ch);
                                }
                            }
                        }
                    }
                    if kept == 0 {
                        return Err(Error::Internal(
                            "copying would produce a childless node".into(),
                        ));
                    }
                    abort_check!();
                }
                abort_check!();
            }
        }

        // Exact removals: the same cascade, but crediting the parents the
        // copies add to shared nodes.
        let mut remaining: Vec<i64> = (0..n)
            .map(|x| {
                self.nodes[x].parent_count as i64 - splice_loss[x] as i64
                    + added_parents.get(&NodeId(x as u32)).copied().unwrap_or(0) as i64
            })
            .collect();
        let mut dead = FixedBitSet::with_capacity(n);
        let mut queue: Vec<NodeId> = Vec::new();
        for ma in &a.mas {
            for side in [ma.n_v, ma.n_d] {
                let x = side.index();
                if !dead.contains(x) && remaining[x] == 0 {
                    dead.insert(x);
                    queue.push(side);
                }
            }
        }
        let mut removed_nodes: i64 = 0;
        let mut removed_edges: i64 = 2 * a.mas.len() as i64;
        let mut removed_params: i64 = 0;
        while let Some(id) = queue.pop() {
            removed_nodes += 1;
            if matches!(self.nodes[id.index()].kind, NodeKind::Parameter { .. }) {
                removed_params += 1;
            }
            for &ch in &self.nodes[id.index()].children {
                removed_edges += 1;
                let x = ch.index();
                remaining[x] -= 1;
                if !dead.contains(x) && ch != self.root && remaining[x] == 0 {
                    dead.insert(x);
                    queue.push(ch);
                }
            }
        }

        Ok(CostOutcome::Exact(SplitDeltas {
            nodes: adds_nodes - removed_nodes,
            edges: adds_edges - removed_edges,
            params: adds_params - removed_params,
        }))
    }

    /// Rewrites the circuit for a split of `leaf` on `var`. `new_leaves[i]`
    /// and `thetas[i]` describe the distribution that replaces `leaf` when
    /// `var = i`; they come from the matching decision-tree split. Detached
    /// originals are garbage collected before returning.
    pub fn apply_split(
        &mut self,
        leaf: LeafId,
        var: Var,
        new_leaves: &[LeafId],
        thetas: &[Vec<f64>],
    ) -> Result<SplitApplied> {
        let a = analyze(self, leaf, var)?;
        let arity_v = a.flags.arity_v;
        if new_leaves.len() != arity_v || thetas.len() != arity_v {
            return Err(Error::InvalidSplit(format!(
                "expected {arity_v} replacement distributions, got {}/{}",
                new_leaves.len(),
                thetas.len()
            )));
        }
        for (i, t) in thetas.iter().enumerate() {
            if t.len() != a.target_arity {
                return Err(Error::InvalidSplit(format!(
                    "replacement distribution {i} has {} entries, expected {}",
                    t.len(),
                    a.target_arity
                )));
            }
            super::check_distribution(
                &format!("distribution for leaf {} (value {i})", new_leaves[i].0),
                t,
            )?;
        }
        let nodes_before = self.nodes.len() as i64;
        let edges_before = self.n_edges as i64;
        let params_before = self.n_params as i64;

        let mut memo: HashMap<(usize, NodeId), NodeId> = HashMap::new();
        let mut param_nodes: Vec<Vec<Option<NodeId>>> =
            vec![vec![None; a.target_arity]; arity_v];
        let mut partial_coverage_events = 0u64;

        struct Frame {
            orig: NodeId,
            is_sum: bool,
            children: Vec<NodeId>,
            next: usize,
            out: Vec<NodeId>,
        }

        // Copies the single-flagged region rooted at `top` for value `i`,
        // creating children before parents with an explicit stack (region
        // depth grows with every split, so recursion is not an option).
        fn copy_region(
            c: &mut Circuit,
            a: &Analysis,
            leaf: LeafId,
            var: Var,
            i: usize,
            top: NodeId,
            memo: &mut HashMap<(usize, NodeId), NodeId>,
            param_nodes: &mut [Vec<Option<NodeId>>],
            new_leaves: &[LeafId],
            thetas: &[Vec<f64>],
        ) -> Result<NodeId> {
            if let Some(&done) = memo.get(&(i, top)) {
                return Ok(done);
            }
            let mut stack = vec![Frame {
                orig: top,
                is_sum: matches!(c.nodes[top.index()].kind, NodeKind::Sum),
                children: c.nodes[top.index()].children.clone(),
                next: 0,
                out: Vec::new(),
            }];
            while let Some(frame) = stack.last_mut() {
                if frame.next < frame.children.len() {
                    let ch = frame.children[frame.next];
                    let class = classify(c, &a.flags, leaf, var, i, ch);
                    if let Some(e) = class_error(frame.is_sum, class) {
                        return Err(e);
                    }
                    match class {
                        ChildClass::Absorbed | ChildClass::Dropped => frame.next += 1,
                        ChildClass::DistParam(j) => {
                            let id = make_param(c, a, i, j, param_nodes, new_leaves, thetas)?;
                            frame.out.push(id);
                            frame.next += 1;
                        }
                        ChildClass::External => {
                            frame.out.push(ch);
                            frame.next += 1;
                        }
                        ChildClass::FlaggedInterior => {
                            if let Some(&done) = memo.get(&(i, ch)) {
                                frame.out.push(done);
                                frame.next += 1;
                            } else {
                                // Suspend; revisiting this child hits the memo.
                                let is_sum = matches!(c.nodes[ch.index()].kind, NodeKind::Sum);
                                let children = c.nodes[ch.index()].children.clone();
                                stack.push(Frame {
                                    orig: ch,
                                    is_sum,
                                    children,
                                    next: 0,
                                    out: Vec::new(),
                                });
                            }
                        }
                    }
                } else {
                    let done = stack.pop().expect("frame exists");
                    if done.out.is_empty() {
                        return Err(Error::Internal(
                            "copying would produce a childless node".into(),
                        ));
                    }
                    let id = if done.is_sum {
                        c.add_sum(done.out)?
                    } else {
                        c.add_product(done.out)?
                    };
                    memo.insert((i, done.orig), id);
                }
            }
            Ok(memo[&(i, top)])
        }

        fn make_param(
            c: &mut Circuit,
            a: &Analysis,
            i: usize,
            j: usize,
            param_nodes: &mut [Vec<Option<NodeId>>],
            new_leaves: &[LeafId],
            thetas: &[Vec<f64>],
        ) -> Result<NodeId> {
            if let Some(id) = param_nodes[i][j] {
                return Ok(id);
            }
            let id = c.add_parameter(new_leaves[i], a.target, j, thetas[i][j])?;
            param_nodes[i][j] = Some(id);
            Ok(id)
        }

        for ma in &a.mas {
            if ma.covered.len() != arity_v {
                partial_coverage_events += 1;
            }
            let mut per_value = Vec::with_capacity(ma.covered.len());
            for &i in &ma.covered {
                let mut parts = vec![self.indicator(var, i)];
                match classify(self, &a.flags, leaf, var, i, ma.n_v) {
                    ChildClass::Absorbed => {}
                    ChildClass::FlaggedInterior => parts.push(copy_region(
                        self,
                        &a,
                        leaf,
                        var,
                        i,
                        ma.n_v,
                        &mut memo,
                        &mut param_nodes,
                        new_leaves,
                        thetas,
                    )?),
                    other => {
                        return Err(Error::Internal(format!(
                            "unexpected {other:?} V-side child of a mutual ancestor"
                        )))
                    }
                }
                match classify(self, &a.flags, leaf, var, i, ma.n_d) {
                    ChildClass::DistParam(j) => {
                        parts.push(make_param(
                            self,
                            &a,
                            i,
                            j,
                            &mut param_nodes,
                            new_leaves,
                            thetas,
                        )?);
                    }
                    ChildClass::FlaggedInterior => parts.push(copy_region(
                        self,
                        &a,
                        leaf,
                        var,
                        i,
                        ma.n_d,
                        &mut memo,
                        &mut param_nodes,
                        new_leaves,
                        thetas,
                    )?),
                    other => {
                        return Err(Error::Internal(format!(
                            "unexpected {other:?} D-side child of a mutual ancestor"
                        )))
                    }
                }
                per_value.push(self.add_product(parts)?);
            }
            let n_plus = self.add_sum(per_value)?;
            self.splice_children(ma.node, ma.n_v, ma.n_d, n_plus)?;
        }

        // Every new leaf must have received a complete distribution;
        // anything else means the circuit left the supported family.
        for (i, row) in param_nodes.iter().enumerate() {
            if row.iter().any(|p| p.is_none()) {
                return Err(Error::Internal(format!(
                    "split left leaf {} (value {i}) with an incomplete distribution",
                    new_leaves[i].0
                )));
            }
        }

        let gc = self.garbage_collect();
        if gc.removed_nodes == 0 {
            return Err(Error::Internal(
                "split did not detach any original region".into(),
            ));
        }
        if self.params_by_leaf.contains_key(&leaf) {
            return Err(Error::Internal(format!(
                "parameters of split leaf {} survived garbage collection",
                leaf.0
            )));
        }
        debug_assert!(self.validate().is_ok(), "{:?}", self.validate());

        Ok(SplitApplied {
            deltas: SplitDeltas {
                nodes: self.nodes.len() as i64 - nodes_before,
                edges: self.n_edges as i64 - edges_before,
                params: self.n_params as i64 - params_before,
            },
            gc,
            partial_coverage_events,
        })
    }
}

/// Which cached split costs an applied split may have changed.
///
/// Everything the rewrite edits, copies, orphans, or re-shares lives below
/// one of its mutual ancestors, and every node it creates combines downward
/// cones of nodes below them, so the union of the mutual ancestors' cones
/// bounds the disturbance. A candidate (D', V') can only gain or lose mutual
/// ancestors — or have a copy region resized — if D' or V' appears in that
/// union. The converse does not hold, so this errs on the stale side: a
/// flagged candidate may in fact still have its old cost.
pub struct InvalidationScopes {
    leaf_touched: FixedBitSet,
    var_touched: FixedBitSet,
}

impl InvalidationScopes {
    pub fn is_stale(&self, leaf: LeafId, var: Var) -> bool {
        self.leaf_touched.contains(leaf.index()) || self.var_touched.contains(var)
    }
}

impl Circuit {
    /// Computes [`InvalidationScopes`] for a split about to be applied.
    /// Must run before the rewrite (it reasons about the current structure).
    pub fn invalidation_scopes(&self, leaf: LeafId, var: Var) -> Result<InvalidationScopes> {
        let a = analyze(self, leaf, var)?;
        let n = self.nodes.len();
        let leaf_space = self
            .params_by_leaf
            .keys()
            .map(|l| l.index() + 1)
            .max()
            .unwrap_or(0);
        let num_vars = self.num_vars();

        // Bottom-up: which leaf distributions / variables appear below each
        // node (self included).
        let mut leaves_below: Vec<FixedBitSet> =
            vec![FixedBitSet::with_capacity(leaf_space); n];
        let mut vars_below: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(num_vars); n];
        for &id in &self.eval_order {
            let x = id.index();
            match self.nodes[x].kind {
                NodeKind::Parameter { leaf: l, .. } => leaves_below[x].insert(l.index()),
                NodeKind::Indicator { var: v, .. } => vars_below[x].insert(v),
                _ => {
                    for k in 0..self.nodes[x].children.len() {
                        let ch = self.nodes[x].children[k].index();
                        let (a_part, b_part) = split_two(&mut leaves_below, x, ch);
                        a_part.union_with(b_part);
                        let (a_part, b_part) = split_two(&mut vars_below, x, ch);
                        a_part.union_with(b_part);
                    }
                }
            }
        }

        let mut scopes = InvalidationScopes {
            leaf_touched: FixedBitSet::with_capacity(leaf_space),
            var_touched: FixedBitSet::with_capacity(num_vars),
        };
        for m in &a.mas {
            let x = m.node.index();
            scopes.leaf_touched.union_with(&leaves_below[x]);
            scopes.var_touched.union_with(&vars_below[x]);
        }
        Ok(scopes)
    }
}

/// Two disjoint mutable references into one slice.
fn split_two<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    debug_assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}
