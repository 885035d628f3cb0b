//! Text serialization of the network: header, then each variable's decision
//! tree in preorder. Preorder with known child counts is self-delimiting, so
//! the reader consumes exactly its own lines and leaves the rest of the
//! stream untouched (the model-bundle reader relies on this).
//!
//! ```text
//! bn <num_vars> <arity,arity,...> <laplace|ml>
//! tree <var>
//! interior <split_var>
//! leaf <id> <theta,theta,...> <count,count,...>
//! ```

use fixedbitset::FixedBitSet;

use super::{BayesNet, Estimator, LeafInfo, TreeCpd, TreeNode};
use crate::circuit::LeafId;
use crate::error::{Error, Result};
use crate::Var;

pub(crate) fn write_bn(bn: &BayesNet, out: &mut String) {
    use std::fmt::Write;
    let arities = bn
        .arities
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let est = match bn.estimator {
        Estimator::Laplace => "laplace",
        Estimator::MaximumLikelihood => "ml",
    };
    writeln!(out, "bn {} {} {}", bn.num_vars(), arities, est).unwrap();
    for (var, tree) in bn.cpds.iter().enumerate() {
        writeln!(out, "tree {var}").unwrap();
        write_node(bn, tree, tree.root, out);
    }
}

fn write_node(bn: &BayesNet, tree: &TreeCpd, idx: usize, out: &mut String) {
    use std::fmt::Write;
    match &tree.nodes[idx] {
        TreeNode::Interior { var, children } => {
            writeln!(out, "interior {var}").unwrap();
            for &c in children {
                write_node(bn, tree, c, out);
            }
        }
        TreeNode::Leaf { leaf } => {
            let info = bn.leaf(*leaf);
            let theta = info
                .theta
                .iter()
                .map(|t| format!("{t}"))
                .collect::<Vec<_>>()
                .join(",");
            let counts = info
                .counts
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "leaf {} {} {}", leaf.0, theta, counts).unwrap();
        }
    }
}

fn data_at(line: usize, msg: impl Into<String>) -> Error {
    Error::DataAt {
        line,
        msg: msg.into(),
    }
}

struct Parser<'a, 'b> {
    lines: &'a mut dyn Iterator<Item = (usize, &'b str)>,
    last_line: usize,
}

impl<'a, 'b> Parser<'a, 'b> {
    fn next_line(&mut self) -> Result<(usize, &'b str)> {
        match self.lines.next() {
            Some((no, s)) => {
                self.last_line = no;
                Ok((no, s))
            }
            None => Err(data_at(self.last_line, "unexpected end of network section")),
        }
    }
}

/// Reads one serialized network. Leaf `rows` come back empty; counts and
/// distributions are validated, the parent/descendant structure is rebuilt
/// from the trees, and cyclic structures are rejected.
pub(crate) fn read_bn(lines: &mut dyn Iterator<Item = (usize, &str)>) -> Result<BayesNet> {
    let mut p = Parser {
        lines,
        last_line: 0,
    };
    let (no, header) = p.next_line()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "bn" {
        return Err(data_at(no, "expected header `bn <n> <arities> <estimator>`"));
    }
    let n: usize = parts[1]
        .parse()
        .map_err(|_| data_at(no, "bad variable count"))?;
    let arities: Vec<usize> = parts[2]
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| data_at(no, "bad arity")))
        .collect::<Result<_>>()?;
    if arities.len() != n {
        return Err(data_at(no, "arity list does not match variable count"));
    }
    if let Some(a) = arities.iter().find(|&&a| a < 2) {
        return Err(data_at(no, format!("arity {a} is below 2")));
    }
    let estimator = match parts[3] {
        "laplace" => Estimator::Laplace,
        "ml" => Estimator::MaximumLikelihood,
        other => return Err(data_at(no, format!("unknown estimator `{other}`"))),
    };

    let mut leaves: Vec<Option<LeafInfo>> = Vec::new();
    let mut cpds = Vec::with_capacity(n);
    for var in 0..n {
        let (no, line) = p.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != "tree" || parts[1] != var.to_string() {
            return Err(data_at(no, format!("expected `tree {var}`")));
        }
        let mut tree = TreeCpd {
            nodes: Vec::new(),
            root: 0,
        };
        let mut path = Vec::new();
        parse_node(&mut p, &arities, var, &mut tree, &mut leaves, &mut path)?;
        cpds.push(tree);
    }

    let mut bn = BayesNet {
        arities,
        cpds,
        leaves,
        parents: vec![FixedBitSet::with_capacity(n); n],
        descendants: vec![FixedBitSet::with_capacity(n); n],
        children: vec![Vec::new(); n],
        estimator,
    };
    for var in 0..n {
        for node in &bn.cpds[var].nodes {
            if let TreeNode::Interior { var: split, .. } = node {
                bn.parents[var].insert(*split);
            }
        }
    }
    for var in 0..n {
        for parent in bn.parents[var].ones().collect::<Vec<_>>() {
            bn.children[parent].push(var);
        }
    }
    bn.rebuild_descendants();
    for var in 0..n {
        if bn.descendants[var].contains(var) {
            return Err(data_at(
                p.last_line,
                format!("variable {var} depends on itself through a cycle"),
            ));
        }
    }
    Ok(bn)
}

fn parse_node(
    p: &mut Parser<'_, '_>,
    arities: &[usize],
    target: Var,
    tree: &mut TreeCpd,
    leaves: &mut Vec<Option<LeafInfo>>,
    path: &mut Vec<(Var, usize)>,
) -> Result<usize> {
    let (no, line) = p.next_line()?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    let idx = tree.nodes.len();
    tree.nodes.push(TreeNode::Leaf {
        leaf: LeafId(u32::MAX),
    });
    match parts.first().copied() {
        Some("interior") => {
            if parts.len() != 2 {
                return Err(data_at(no, "expected `interior <var>`"));
            }
            let var: Var = parts[1]
                .parse()
                .map_err(|_| data_at(no, "bad interior variable"))?;
            if var >= arities.len() {
                return Err(data_at(no, format!("variable {var} out of range")));
            }
            if var == target {
                return Err(data_at(no, "tree splits on its own variable"));
            }
            if path.iter().any(|&(v, _)| v == var) {
                return Err(data_at(no, format!("variable {var} repeats on a tree path")));
            }
            let mut children = Vec::with_capacity(arities[var]);
            for value in 0..arities[var] {
                path.push((var, value));
                children.push(parse_node(p, arities, target, tree, leaves, path)?);
                path.pop();
            }
            tree.nodes[idx] = TreeNode::Interior { var, children };
            Ok(idx)
        }
        Some("leaf") => {
            if parts.len() != 4 {
                return Err(data_at(no, "expected `leaf <id> <theta...> <counts...>`"));
            }
            let id: u32 = parts[1].parse().map_err(|_| data_at(no, "bad leaf id"))?;
            let theta: Vec<f64> = parts[2]
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|_| data_at(no, "bad probability")))
                .collect::<Result<_>>()?;
            let counts: Vec<u64> = parts[3]
                .split(',')
                .map(|s| s.parse::<u64>().map_err(|_| data_at(no, "bad count")))
                .collect::<Result<_>>()?;
            let arity = arities[target];
            if theta.len() != arity || counts.len() != arity {
                return Err(data_at(no, "leaf lists do not match the variable's arity"));
            }
            if theta.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
                return Err(data_at(no, "leaf probability outside [0, 1]"));
            }
            let sum: f64 = theta.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(data_at(no, format!("leaf distribution sums to {sum}")));
            }
            let slot = id as usize;
            if leaves.len() <= slot {
                leaves.resize_with(slot + 1, || None);
            }
            if leaves[slot].is_some() {
                return Err(data_at(no, format!("duplicate leaf id {id}")));
            }
            leaves[slot] = Some(LeafInfo {
                var: target,
                theta,
                counts,
                path: path.clone(),
                rows: Vec::new(),
                tree_node: idx,
            });
            tree.nodes[idx] = TreeNode::Leaf { leaf: LeafId(id) };
            Ok(idx)
        }
        _ => Err(data_at(no, "expected `interior` or `leaf` line")),
    }
}
