//! Exact conditional queries and query-set utilities.
//!
//! A conditional P(Q | E) costs two linear circuit evaluations: the evidence
//! pass marginalizes out everything but E, the joint pass additionally fixes
//! Q, and the answer is the log-ratio. Query files hold one query per line,
//! `q var=val ... | e var=val ...`.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::bn::BayesNet;
use crate::circuit::{Circuit, Evidence};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Var;

/// A conditional query: the probability of the `targets` assignment given
/// the `evidence` assignment. Variable sets are disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub targets: Vec<(Var, usize)>,
    pub evidence: Vec<(Var, usize)>,
}

impl Query {
    /// Checks variable ranges, value ranges, in-section duplicates and
    /// cross-section disjointness.
    pub fn validate(&self, arities: &[usize]) -> Result<()> {
        let mut seen = vec![false; arities.len()];
        for (section, pairs) in [("query", &self.targets), ("evidence", &self.evidence)] {
            for &(var, value) in pairs {
                if var >= arities.len() {
                    return Err(Error::Data(format!(
                        "{section} variable {var} out of range (n = {})",
                        arities.len()
                    )));
                }
                if value >= arities[var] {
                    return Err(Error::Data(format!(
                        "{section} value {value} out of range for variable {var} (arity {})",
                        arities[var]
                    )));
                }
                if seen[var] {
                    return Err(Error::Data(format!(
                        "variable {var} appears twice in the query"
                    )));
                }
                seen[var] = true;
            }
        }
        Ok(())
    }

    /// Canonical one-line form, e.g. `q 0=1 3=0 | e 2=1` (sections may be
    /// empty).
    pub fn to_line(&self) -> String {
        let mut s = String::from("q");
        for &(v, val) in &self.targets {
            s.push_str(&format!(" {v}={val}"));
        }
        s.push_str(" | e");
        for &(v, val) in &self.evidence {
            s.push_str(&format!(" {v}={val}"));
        }
        s
    }

    /// Parses [`to_line`](Self::to_line)'s format; the `| e` part is
    /// optional.
    pub fn parse(line: &str) -> Result<Query> {
        fn pairs(chunk: &str, lead: &str) -> Result<Vec<(Var, usize)>> {
            let rest = chunk
                .trim()
                .strip_prefix(lead)
                .ok_or_else(|| Error::Format(format!("expected `{lead}` section: {chunk:?}")))?;
            rest.split_whitespace()
                .map(|tok| {
                    let (v, val) = tok
                        .split_once('=')
                        .ok_or_else(|| Error::Format(format!("expected var=value, got {tok:?}")))?;
                    Ok((
                        v.parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad variable {v:?}")))?,
                        val.parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad value {val:?}")))?,
                    ))
                })
                .collect()
        }
        let (q_part, e_part) = match line.split_once('|') {
            Some((q, e)) => (q, Some(e)),
            None => (line, None),
        };
        Ok(Query {
            targets: pairs(q_part, "q")?,
            evidence: match e_part {
                Some(e) => pairs(e, "e")?,
                None => Vec::new(),
            },
        })
    }
}

/// Reads a query file: one query per line, `#` comments and blank lines
/// skipped. Queries are validated against the arities.
pub fn parse_queries(text: &str, arities: &[usize]) -> Result<Vec<Query>> {
    let mut queries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let q = Query::parse(line).map_err(|e| Error::DataAt {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        q.validate(arities).map_err(|e| Error::DataAt {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        queries.push(q);
    }
    Ok(queries)
}

/// An answered exact query.
#[derive(Clone, Copy, Debug)]
pub struct QueryAnswer {
    pub log_prob: f64,
    /// Circuit nodes visited across both evaluation passes.
    pub nodes_visited: u64,
}

/// log P(targets | evidence) by two circuit evaluations, in log space
/// throughout. Zero-probability evidence is an error; a zero-probability
/// target under possible evidence yields −∞.
pub fn query_conditional(circuit: &Circuit, query: &Query) -> Result<QueryAnswer> {
    query.validate(circuit.arities())?;
    let mut ev = Evidence::empty(circuit.arities());
    for &(v, val) in &query.evidence {
        ev.observe(v, val)?;
    }
    let (log_pe, stats_e) = circuit.evaluate_log_with_stats(&ev)?;
    if log_pe == f64::NEG_INFINITY {
        return Err(Error::ImpossibleEvidence(query.to_line()));
    }
    for &(v, val) in &query.targets {
        ev.observe(v, val)?;
    }
    let (log_pqe, stats_qe) = circuit.evaluate_log_with_stats(&ev)?;
    Ok(QueryAnswer {
        log_prob: log_pqe - log_pe,
        nodes_visited: stats_e.nodes_visited + stats_qe.nodes_visited,
    })
}

/// Brute-force oracle: log P(targets | evidence) by enumerating every
/// completion of the network's joint distribution. Exponential; intended for
/// tests on small models.
pub fn brute_force_conditional(bn: &BayesNet, query: &Query) -> Result<f64> {
    query.validate(bn.arities())?;
    let n = bn.num_vars();
    let states: f64 = bn.arities().iter().map(|&a| a as f64).product();
    if states > 5e7 {
        return Err(Error::Config(format!(
            "brute force over {states} states refused"
        )));
    }
    let sum_consistent = |fixed: &[(Var, usize)]| -> f64 {
        let mut row = vec![0u8; n];
        let free: Vec<Var> =
            (0..n).filter(|v| !fixed.iter().any(|&(f, _)| f == *v)).collect();
        for &(v, val) in fixed {
            row[v] = val as u8;
        }
        let mut total = 0.0;
        let mut odometer = vec![0usize; free.len()];
        loop {
            for (k, &v) in free.iter().enumerate() {
                row[v] = odometer[k] as u8;
            }
            total += bn.joint_probability(&row);
            // Advance the mixed-radix odometer; stop after the last state.
            let mut pos = 0;
            loop {
                if pos == free.len() {
                    return total;
                }
                odometer[pos] += 1;
                if odometer[pos] < bn.arity(free[pos]) {
                    break;
                }
                odometer[pos] = 0;
                pos += 1;
            }
        }
    };
    let p_e = sum_consistent(&query.evidence);
    if p_e <= 0.0 {
        return Err(Error::ImpossibleEvidence(query.to_line()));
    }
    let mut both = query.evidence.clone();
    both.extend_from_slice(&query.targets);
    let p_qe = sum_consistent(&both);
    Ok(p_qe.ln() - p_e.ln())
}

/// Draws one query per dataset row: disjoint query/evidence variable sets of
/// sizes `round(fraction · n)`, with values read from the row. Deterministic
/// under `seed`.
pub fn generate_queries(
    data: &Dataset,
    query_fraction: f64,
    evidence_fraction: f64,
    seed: u64,
) -> Result<Vec<Query>> {
    for (name, f) in [("query", query_fraction), ("evidence", evidence_fraction)] {
        if !f.is_finite() || f < 0.0 {
            return Err(Error::Config(format!(
                "{name} fraction must be finite and ≥ 0, got {f}"
            )));
        }
    }
    if query_fraction + evidence_fraction > 1.0 {
        return Err(Error::Config(format!(
            "fractions sum to {} > 1",
            query_fraction + evidence_fraction
        )));
    }
    let n = data.num_vars();
    let n_q = (query_fraction * n as f64).round() as usize;
    let n_e = (evidence_fraction * n as f64).round() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut vars: Vec<Var> = (0..n).collect();
    let mut queries = Vec::with_capacity(data.num_rows());
    for r in 0..data.num_rows() {
        vars.shuffle(&mut rng);
        let row = data.row(r);
        let pick = |slice: &[Var]| -> Vec<(Var, usize)> {
            let mut pairs: Vec<(Var, usize)> =
                slice.iter().map(|&v| (v, row[v] as usize)).collect();
            pairs.sort_unstable();
            pairs
        };
        queries.push(Query {
            targets: pick(&vars[..n_q]),
            evidence: pick(&vars[n_q..n_q + n_e]),
        });
    }
    Ok(queries)
}

/// One row of a query-set evaluation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct QueryRecord {
    pub index: usize,
    /// Natural-log conditional probability; `None` for impossible evidence.
    pub log_prob: Option<f64>,
    /// log_prob / |Q|, the per-query-variable metric.
    pub per_variable: Option<f64>,
    pub micros: u64,
    pub nodes_visited: u64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct QuerySetReport {
    pub records: Vec<QueryRecord>,
    /// Mean of `per_variable` over answerable queries.
    pub mean_log_prob_per_variable: f64,
    pub impossible_evidence: u64,
    pub total: usize,
}

/// Answers every query exactly and aggregates the per-variable metric.
/// Impossible-evidence queries are counted and excluded from the mean.
pub fn evaluate_queryset(circuit: &Circuit, queries: &[Query]) -> Result<QuerySetReport> {
    let mut records = Vec::with_capacity(queries.len());
    let mut sum = 0.0;
    let mut answered = 0u64;
    let mut impossible = 0u64;
    for (index, q) in queries.iter().enumerate() {
        let started = Instant::now();
        match query_conditional(circuit, q) {
            Ok(ans) => {
                let per_variable = if q.targets.is_empty() {
                    0.0
                } else {
                    ans.log_prob / q.targets.len() as f64
                };
                sum += per_variable;
                answered += 1;
                records.push(QueryRecord {
                    index,
                    log_prob: Some(ans.log_prob),
                    per_variable: Some(per_variable),
                    micros: started.elapsed().as_micros() as u64,
                    nodes_visited: ans.nodes_visited,
                });
            }
            Err(Error::ImpossibleEvidence(_)) => {
                impossible += 1;
                records.push(QueryRecord {
                    index,
                    log_prob: None,
                    per_variable: None,
                    micros: started.elapsed().as_micros() as u64,
                    nodes_visited: 0,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(QuerySetReport {
        records,
        mean_log_prob_per_variable: if answered > 0 { sum / answered as f64 } else { 0.0 },
        impossible_evidence: impossible,
        total: queries.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::LeafId;
    use crate::learn::{learn, LearnConfig};
    use approx::assert_relative_eq;

    /// The 2-variable chain P(X0=1)=0.6, P(X1=1|X0=1)=0.9, P(X1=1|X0=0)=0.2
    /// as a circuit, via one split on the product-of-marginals start.
    fn chain_circuit() -> Circuit {
        let mut c = Circuit::product_of_marginals(&[
            (LeafId(0), vec![0.4, 0.6]), // X0
            (LeafId(1), vec![0.5, 0.5]), // X1, replaced by the split
        ])
        .unwrap();
        c.apply_split(
            LeafId(1),
            0,
            &[LeafId(2), LeafId(3)],
            &[vec![0.8, 0.2], vec![0.1, 0.9]],
        )
        .unwrap();
        c
    }

    #[test]
    fn marginal_on_the_chain_matches_hand_computation() {
        let c = chain_circuit();
        let q = Query {
            targets: vec![(1, 1)],
            evidence: vec![],
        };
        let ans = query_conditional(&c, &q).unwrap();
        // P(X1=1) = 0.6·0.9 + 0.4·0.2 = 0.62.
        assert_relative_eq!(ans.log_prob.exp(), 0.62, max_relative = 1e-12);
        assert!(ans.nodes_visited <= 2 * c.node_count() as u64);
    }

    #[test]
    fn conditional_identity_and_chain_rule() {
        let c = chain_circuit();
        // P(X0=1 | X1=1) via Bayes: 0.54 / 0.62.
        let q = Query {
            targets: vec![(0, 1)],
            evidence: vec![(1, 1)],
        };
        let ans = query_conditional(&c, &q).unwrap();
        assert_relative_eq!(ans.log_prob.exp(), 0.54 / 0.62, max_relative = 1e-12);

        // Chain rule: log P(A,B) = log P(A|B) + log P(B).
        let joint = query_conditional(
            &c,
            &Query {
                targets: vec![(0, 1), (1, 1)],
                evidence: vec![],
            },
        )
        .unwrap();
        let marg = query_conditional(
            &c,
            &Query {
                targets: vec![(1, 1)],
                evidence: vec![],
            },
        )
        .unwrap();
        assert_relative_eq!(
            joint.log_prob,
            ans.log_prob + marg.log_prob,
            epsilon = 1e-12
        );
    }

    #[test]
    fn exact_queries_match_brute_force_on_a_learned_model() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        let rows: Vec<Vec<u8>> = (0..600)
            .map(|_| {
                let a: u8 = rng.random_range(0..2);
                let b = if rng.random::<f64>() < 0.85 { a } else { 1 - a };
                let c: u8 = rng.random_range(0..3);
                let d = u8::from(c == 2) | b;
                vec![a, b, c, d]
            })
            .collect();
        let data = Dataset::new(vec![2, 2, 3, 2], rows).unwrap();
        let out = learn(&data, &LearnConfig::default()).unwrap();
        let queries = generate_queries(&data, 0.4, 0.3, 99).unwrap();
        for q in queries.iter().take(120) {
            let exact = query_conditional(&out.circuit, q);
            let oracle = brute_force_conditional(&out.bn, q);
            match (exact, oracle) {
                (Ok(a), Ok(b)) => assert_relative_eq!(a.log_prob, b, epsilon = 1e-9),
                (Err(Error::ImpossibleEvidence(_)), Err(Error::ImpossibleEvidence(_))) => {}
                (a, b) => panic!("disagreement: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn generated_queries_are_disjoint_sized_and_deterministic() {
        let rows: Vec<Vec<u8>> = (0..50).map(|i| vec![(i % 2) as u8; 10]).collect();
        let data = Dataset::new(vec![2; 10], rows).unwrap();
        let qs = generate_queries(&data, 0.3, 0.5, 7).unwrap();
        assert_eq!(qs.len(), 50);
        for q in &qs {
            assert_eq!(q.targets.len(), 3);
            assert_eq!(q.evidence.len(), 5);
            let mut vars: Vec<Var> = q
                .targets
                .iter()
                .chain(&q.evidence)
                .map(|&(v, _)| v)
                .collect();
            vars.sort_unstable();
            vars.dedup();
            assert_eq!(vars.len(), 8, "overlapping sections");
        }
        assert_eq!(qs, generate_queries(&data, 0.3, 0.5, 7).unwrap());
        assert_ne!(qs, generate_queries(&data, 0.3, 0.5, 8).unwrap());
        assert!(generate_queries(&data, 0.7, 0.6, 1).is_err());
    }

    #[test]
    fn query_lines_round_trip_and_reject_garbage() {
        let q = Query {
            targets: vec![(0, 1), (3, 0)],
            evidence: vec![(2, 1)],
        };
        assert_eq!(q.to_line(), "q 0=1 3=0 | e 2=1");
        assert_eq!(Query::parse(&q.to_line()).unwrap(), q);
        let empty_e = Query {
            targets: vec![(1, 1)],
            evidence: vec![],
        };
        assert_eq!(Query::parse(&empty_e.to_line()).unwrap(), empty_e);
        assert_eq!(
            Query::parse("q 1=1").unwrap(),
            Query {
                targets: vec![(1, 1)],
                evidence: vec![]
            }
        );
        assert!(Query::parse("p 1=1").is_err());
        assert!(Query::parse("q 1").is_err());
        assert!(Query::parse("q x=1").is_err());

        // Validation catches duplicates, overlaps and ranges.
        let arities = [2usize, 2, 2];
        assert!(Query::parse("q 0=1 0=0").unwrap().validate(&arities).is_err());
        assert!(Query::parse("q 0=1 | e 0=0").unwrap().validate(&arities).is_err());
        assert!(Query::parse("q 0=2").unwrap().validate(&arities).is_err());
        assert!(Query::parse("q 9=0").unwrap().validate(&arities).is_err());

        let text = "# comment\n\nq 0=1 | e 1=0\nq 2=1\n";
        let parsed = parse_queries(text, &arities).unwrap();
        assert_eq!(parsed.len(), 2);
        assert!(matches!(
            parse_queries("q 9=0\n", &arities),
            Err(Error::DataAt { line: 1, .. })
        ));
    }

    #[test]
    fn queryset_report_aggregates_the_per_variable_metric() {
        // Circuits built here have strictly positive parameters, so no
        // evidence is impossible; the exclusion counter must stay zero.
        let c = chain_circuit();
        let report = evaluate_queryset(
            &c,
            &[
                Query {
                    targets: vec![(0, 1)],
                    evidence: vec![(1, 1)],
                },
                Query {
                    targets: vec![(0, 0), (1, 0)],
                    evidence: vec![],
                },
            ],
        )
        .unwrap();
        assert_eq!(report.total, 2);
        assert_eq!(report.impossible_evidence, 0);
        assert!(report.records.iter().all(|r| r.log_prob.is_some()));
        let expected = (0.54f64 / 0.62).ln() + (0.4f64 * 0.8).ln() / 2.0;
        assert_relative_eq!(
            report.mean_log_prob_per_variable,
            expected / 2.0,
            epsilon = 1e-12
        );
    }
}
