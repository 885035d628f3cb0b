//! Plain-text circuit serialization.
//!
//! Header line, then one node per line in a deterministic topological order
//! (post-order DFS from the root, so children always precede parents and the
//! root is the last line):
//!
//! ```text
//! circuit <node-count> <root-id> <arity,arity,...>
//! <id> ind <var> <value>
//! <id> par <leaf> <var> <value> <weight>
//! <id> sum <child-id>...
//! <id> prod <child-id>...
//! ```
//!
//! File ids are assigned by the save traversal, so structurally identical
//! circuits serialize to identical bytes regardless of arena history, and
//! save → load → save round-trips exactly (weights print in Rust's shortest
//! round-trip form).

use std::fmt::Write as _;

use super::{Circuit, LeafId, NodeId, NodeKind};
use crate::error::{Error, Result};

pub(crate) fn write_circuit(c: &Circuit, out: &mut String) {
    // Deterministic file ids: post-order DFS over the live graph.
    let mut file_id = vec![usize::MAX; c.node_count()];
    let mut order: Vec<NodeId> = Vec::with_capacity(c.node_count());
    let mut stack: Vec<(NodeId, usize)> = vec![(c.root(), 0)];
    let mut seen = vec![false; c.node_count()];
    seen[c.root().index()] = true;
    while let Some(&mut (id, ref mut next)) = stack.last_mut() {
        let kids = c.children(id);
        if *next < kids.len() {
            let child = kids[*next];
            *next += 1;
            if !seen[child.index()] {
                seen[child.index()] = true;
                stack.push((child, 0));
            }
        } else {
            file_id[id.index()] = order.len();
            order.push(id);
            stack.pop();
        }
    }

    let arities: Vec<String> = c.arities().iter().map(|a| a.to_string()).collect();
    let _ = writeln!(
        out,
        "circuit {} {} {}",
        order.len(),
        file_id[c.root().index()],
        arities.join(",")
    );
    for (fid, &id) in order.iter().enumerate() {
        match *c.kind(id) {
            NodeKind::Indicator { var, value } => {
                let _ = writeln!(out, "{fid} ind {var} {value}");
            }
            NodeKind::Parameter {
                leaf,
                var,
                value,
                weight,
            } => {
                let _ = writeln!(out, "{fid} par {} {var} {value} {weight}", leaf.0);
            }
            NodeKind::Sum => {
                let kids: Vec<String> = c
                    .children(id)
                    .iter()
                    .map(|k| file_id[k.index()].to_string())
                    .collect();
                let _ = writeln!(out, "{fid} sum {}", kids.join(" "));
            }
            NodeKind::Product => {
                let kids: Vec<String> = c
                    .children(id)
                    .iter()
                    .map(|k| file_id[k.index()].to_string())
                    .collect();
                let _ = writeln!(out, "{fid} prod {}", kids.join(" "));
            }
        }
    }
}

pub(crate) fn read_circuit(lines: &mut dyn Iterator<Item = (usize, &str)>) -> Result<Circuit> {
    let bad = |line: usize, msg: &str| Error::DataAt {
        line,
        msg: msg.into(),
    };
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::Format("missing circuit header".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("circuit") {
        return Err(bad(header_line, "expected `circuit` header"));
    }
    let count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(header_line, "bad node count"))?;
    let root: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(header_line, "bad root id"))?;
    let arities: Vec<usize> = parts
        .next()
        .ok_or_else(|| bad(header_line, "missing arities"))?
        .split(',')
        .map(|s| s.parse().map_err(|_| bad(header_line, "bad arity")))
        .collect::<Result<_>>()?;
    if arities.iter().any(|&a| a < 2) {
        return Err(bad(header_line, "arities must be at least 2"));
    }
    if root >= count {
        return Err(bad(header_line, "root id out of range"));
    }

    let mut c = Circuit::empty(arities);
    for expect in 0..count {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("circuit ends early: {expect} of {count} nodes")))?;
        let mut parts = line.split_whitespace();
        let id: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(line_no, "bad node id"))?;
        if id != expect {
            return Err(bad(line_no, "node ids must be consecutive from 0"));
        }
        let kind = parts.next().ok_or_else(|| bad(line_no, "missing kind"))?;
        let built = match kind {
            "ind" => {
                let var: usize = parse_field(&mut parts, line_no, "variable")?;
                let value: usize = parse_field(&mut parts, line_no, "value")?;
                if var >= c.num_vars() || value >= c.arity(var) {
                    return Err(bad(line_no, "indicator variable/value out of range"));
                }
                c.add_indicator(var, value)
                    .map_err(|e| bad(line_no, &e.to_string()))?
            }
            "par" => {
                let leaf: u32 = parse_field(&mut parts, line_no, "leaf id")?;
                let var: usize = parse_field(&mut parts, line_no, "variable")?;
                let value: usize = parse_field(&mut parts, line_no, "value")?;
                let weight: f64 = parse_field(&mut parts, line_no, "weight")?;
                if var >= c.num_vars() || value >= c.arity(var) {
                    return Err(bad(line_no, "parameter variable/value out of range"));
                }
                c.add_parameter(LeafId(leaf), var, value, weight)
                    .map_err(|e| bad(line_no, &e.to_string()))?
            }
            "sum" | "prod" => {
                let mut kids = Vec::new();
                for s in parts.by_ref() {
                    let k: usize = s
                        .parse()
                        .map_err(|_| bad(line_no, "bad child id"))?;
                    if k >= id {
                        return Err(bad(line_no, "children must precede parents"));
                    }
                    kids.push(NodeId(k as u32));
                }
                let r = if kind == "sum" {
                    c.add_sum(kids)
                } else {
                    c.add_product(kids)
                };
                r.map_err(|e| bad(line_no, &e.to_string()))?
            }
            other => return Err(bad(line_no, &format!("unknown node kind `{other}`"))),
        };
        debug_assert_eq!(built.index(), id);
        if parts.next().is_some() && matches!(kind, "ind" | "par") {
            return Err(bad(line_no, "trailing fields"));
        }
    }
    c.root = NodeId(root as u32);
    c.rebuild_eval_order();
    c.validate()
        .map_err(|e| Error::Format(format!("loaded circuit invalid: {e}")))?;
    Ok(c)
}

fn parse_field<T: std::str::FromStr>(
    parts: &mut std::str::SplitWhitespace,
    line: usize,
    what: &str,
) -> Result<T> {
    parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::DataAt {
            line,
            msg: format!("missing or bad {what}"),
        })
}

#[cfg(test)]
mod tests {
    use super::super::{Evidence, LeafId};
    use super::*;

    fn sample() -> Circuit {
        Circuit::product_of_marginals(&[
            (LeafId(0), vec![0.3, 0.7]),
            (LeafId(1), vec![0.1, 0.2, 0.7]),
        ])
        .unwrap()
    }

    fn load(text: &str) -> Result<Circuit> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        read_circuit(&mut lines)
    }

    #[test]
    fn save_load_save_round_trips_bytes() {
        let c = sample();
        let mut text = String::new();
        write_circuit(&c, &mut text);
        let c2 = load(&text).unwrap();
        let mut text2 = String::new();
        write_circuit(&c2, &mut text2);
        assert_eq!(text, text2);
    }

    #[test]
    fn loaded_circuit_evaluates_identically() {
        let c = sample();
        let mut text = String::new();
        write_circuit(&c, &mut text);
        let c2 = load(&text).unwrap();
        let mut ev = Evidence::empty(c.arities());
        ev.observe(1, 2).unwrap();
        assert_eq!(c.evaluate(&ev).unwrap(), c2.evaluate(&ev).unwrap());
    }

    #[test]
    fn corrupt_lines_are_rejected_with_line_numbers() {
        let c = sample();
        let mut text = String::new();
        write_circuit(&c, &mut text);
        let broken = text.replace("0 ind", "0 wat");
        let err = load(&broken).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
