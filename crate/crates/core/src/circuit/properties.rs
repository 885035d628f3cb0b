//! Structural property checks: smoothness, decomposability, determinism.
//!
//! These are the three properties that make single-pass evaluation compute
//! the network polynomial: every sum's children range over the same
//! variables (smooth), every product's children touch disjoint variables
//! (decomposable), and every sum's children are mutually exclusive on its
//! deciding variable (deterministic). Split surgery must preserve all three;
//! the checker reports violations rather than erroring so tests can inspect
//! them.

use fixedbitset::FixedBitSet;

use super::{Circuit, NodeId, NodeKind};

/// Per-node reachability sets, computed bottom-up in one pass:
/// which variables' indicators, which variables' parameters, and which
/// individual indicator slots are reachable from each node.
pub struct ScopeTable {
    num_vars: usize,
    ind_vars: Vec<FixedBitSet>,
    param_vars: Vec<FixedBitSet>,
    ind_slots: Vec<FixedBitSet>,
}

impl ScopeTable {
    pub fn compute(c: &Circuit) -> ScopeTable {
        let n = c.node_count();
        let num_vars = c.num_vars();
        let slots = c.total_slots();
        let mut t = ScopeTable {
            num_vars,
            ind_vars: vec![FixedBitSet::with_capacity(num_vars); n],
            param_vars: vec![FixedBitSet::with_capacity(num_vars); n],
            ind_slots: vec![FixedBitSet::with_capacity(slots); n],
        };
        for &id in c.eval_order() {
            let i = id.index();
            match *c.kind(id) {
                NodeKind::Indicator { var, value } => {
                    t.ind_vars[i].insert(var);
                    t.ind_slots[i].insert(c.slot(var, value));
                }
                NodeKind::Parameter { var, .. } => {
                    t.param_vars[i].insert(var);
                }
                NodeKind::Sum | NodeKind::Product => {
                    // Union of children; split borrows via index juggling.
                    for k in 0..c.children(id).len() {
                        let child = c.children(id)[k].index();
                        debug_assert!(child != i);
                        let (a, b) = split_two(&mut t.ind_vars, i, child);
                        a.union_with(b);
                        let (a, b) = split_two(&mut t.param_vars, i, child);
                        a.union_with(b);
                        let (a, b) = split_two(&mut t.ind_slots, i, child);
                        a.union_with(b);
                    }
                }
            }
        }
        t
    }

    /// Variables with an indicator descendant of `id`.
    pub fn indicator_vars(&self, id: NodeId) -> &FixedBitSet {
        &self.ind_vars[id.index()]
    }

    /// Variables with a parameter descendant of `id` (via the parameter's
    /// owning distribution).
    pub fn parameter_vars(&self, id: NodeId) -> &FixedBitSet {
        &self.param_vars[id.index()]
    }

    /// Indicator slots (variable, value) reachable from `id`.
    pub fn indicator_slots(&self, id: NodeId) -> &FixedBitSet {
        &self.ind_slots[id.index()]
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }
}

fn split_two<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    debug_assert!(a != b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

#[derive(Clone, Debug)]
pub struct PropertyViolation {
    pub node: NodeId,
    pub detail: String,
}

/// Result of [`check_properties`]: per property, whether it holds everywhere
/// and the first violating node if not.
#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub smooth: bool,
    pub decomposable: bool,
    pub deterministic: bool,
    pub smooth_violation: Option<PropertyViolation>,
    pub decomposable_violation: Option<PropertyViolation>,
    pub deterministic_violation: Option<PropertyViolation>,
}

impl PropertyReport {
    pub fn all_hold(&self) -> bool {
        self.smooth && self.decomposable && self.deterministic
    }
}

/// Checks smoothness, decomposability and determinism of the whole circuit.
///
/// * Smooth: each sum's children have identical indicator-variable scopes and
///   identical parameter-variable scopes.
/// * Decomposable: each product's children have pairwise-disjoint indicator
///   scopes and pairwise-disjoint parameter scopes.
/// * Deterministic: each sum with more than one child has a deciding
///   variable: one on which every child reaches a nonempty set of indicator
///   values, those sets pairwise disjoint (so at most one child is nonzero
///   under any complete assignment). Single-child sums are trivially
///   deterministic.
pub fn check_properties(c: &Circuit) -> PropertyReport {
    let scopes = ScopeTable::compute(c);
    let mut report = PropertyReport {
        smooth: true,
        decomposable: true,
        deterministic: true,
        smooth_violation: None,
        decomposable_violation: None,
        deterministic_violation: None,
    };
    for &id in c.eval_order() {
        match c.kind(id) {
            NodeKind::Sum => {
                check_sum_smooth(c, &scopes, id, &mut report);
                check_sum_deterministic(c, &scopes, id, &mut report);
            }
            NodeKind::Product => check_product_decomposable(c, &scopes, id, &mut report),
            _ => {}
        }
    }
    report
}

fn check_sum_smooth(c: &Circuit, scopes: &ScopeTable, id: NodeId, report: &mut PropertyReport) {
    if !report.smooth {
        return;
    }
    let kids = c.children(id);
    let first = kids[0];
    for &k in &kids[1..] {
        if scopes.indicator_vars(k) != scopes.indicator_vars(first)
            || scopes.parameter_vars(k) != scopes.parameter_vars(first)
        {
            report.smooth = false;
            report.smooth_violation = Some(PropertyViolation {
                node: id,
                detail: format!(
                    "sum {:?}: children {:?} and {:?} have different scopes",
                    id, first, k
                ),
            });
            return;
        }
    }
}

fn check_product_decomposable(
    c: &Circuit,
    scopes: &ScopeTable,
    id: NodeId,
    report: &mut PropertyReport,
) {
    if !report.decomposable {
        return;
    }
    let kids = c.children(id);
    let mut seen_ind = FixedBitSet::with_capacity(scopes.num_vars());
    let mut seen_param = FixedBitSet::with_capacity(scopes.num_vars());
    for &k in kids {
        if !seen_ind.is_disjoint(scopes.indicator_vars(k))
            || !seen_param.is_disjoint(scopes.parameter_vars(k))
        {
            report.decomposable = false;
            report.decomposable_violation = Some(PropertyViolation {
                node: id,
                detail: format!(
                    "product {:?}: child {:?} shares variables with a sibling",
                    id, k
                ),
            });
            return;
        }
        seen_ind.union_with(scopes.indicator_vars(k));
        seen_param.union_with(scopes.parameter_vars(k));
    }
}

fn check_sum_deterministic(
    c: &Circuit,
    scopes: &ScopeTable,
    id: NodeId,
    report: &mut PropertyReport,
) {
    if !report.deterministic {
        return;
    }
    let kids = c.children(id);
    if kids.len() < 2 {
        return;
    }
    // Candidate deciding variables: must appear in every child's indicator
    // scope (a child with no values of it could never be exclusive).
    let mut candidates = scopes.indicator_vars(kids[0]).clone();
    for &k in &kids[1..] {
        candidates.intersect_with(scopes.indicator_vars(k));
    }
    'vars: for var in candidates.ones() {
        let mut seen = FixedBitSet::with_capacity(c.arity(var));
        for &k in kids {
            let mut any = false;
            for value in 0..c.arity(var) {
                if scopes.indicator_slots(k).contains(c.slot(var, value)) {
                    if seen.contains(value) {
                        continue 'vars; // overlapping value sets
                    }
                    seen.insert(value);
                    any = true;
                }
            }
            if !any {
                continue 'vars;
            }
        }
        return; // `var` decides this sum
    }
    report.deterministic = false;
    report.deterministic_violation = Some(PropertyViolation {
        node: id,
        detail: format!("sum {:?}: no variable partitions its children", id),
    });
}
