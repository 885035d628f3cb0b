//! Bottom-up circuit evaluation, in linear space and in log space.

use super::{Circuit, Evidence, NodeKind};
use crate::error::{Error, Result};

/// Work done by one evaluation sweep.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalStats {
    /// Nodes visited; one bottom-up sweep visits each live node exactly once.
    pub nodes_visited: u64,
}

impl Circuit {
    /// Network-polynomial value under the evidence: P(partial instantiation).
    /// One bottom-up pass; zero-probability evidence yields exactly 0.
    pub fn evaluate(&self, evidence: &Evidence) -> Result<f64> {
        self.evaluate_with_stats(evidence).map(|(v, _)| v)
    }

    pub fn evaluate_with_stats(&self, evidence: &Evidence) -> Result<(f64, EvalStats)> {
        self.check_evidence(evidence)?;
        let mut values = vec![0.0f64; self.node_count()];
        for &id in self.eval_order() {
            let i = id.index();
            values[i] = match *self.kind(id) {
                NodeKind::Indicator { var, value } => {
                    if evidence.is_set(var, value) {
                        1.0
                    } else {
                        0.0
                    }
                }
                NodeKind::Parameter { weight, .. } => weight,
                NodeKind::Sum => self.children(id).iter().map(|c| values[c.index()]).sum(),
                NodeKind::Product => self
                    .children(id)
                    .iter()
                    .map(|c| values[c.index()])
                    .product(),
            };
        }
        let stats = EvalStats {
            nodes_visited: self.eval_order().len() as u64,
        };
        Ok((values[self.root().index()], stats))
    }

    /// Log-space evaluation: returns ln of the polynomial value, −∞ for an
    /// exactly-zero value. Sums use log-sum-exp for stability.
    pub fn evaluate_log(&self, evidence: &Evidence) -> Result<f64> {
        self.evaluate_log_with_stats(evidence).map(|(v, _)| v)
    }

    pub fn evaluate_log_with_stats(&self, evidence: &Evidence) -> Result<(f64, EvalStats)> {
        self.check_evidence(evidence)?;
        let mut values = vec![f64::NEG_INFINITY; self.node_count()];
        for &id in self.eval_order() {
            let i = id.index();
            values[i] = match *self.kind(id) {
                NodeKind::Indicator { var, value } => {
                    if evidence.is_set(var, value) {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                NodeKind::Parameter { weight, .. } => weight.ln(),
                NodeKind::Product => self.children(id).iter().map(|c| values[c.index()]).sum(),
                NodeKind::Sum => {
                    let kids = self.children(id);
                    let max = kids
                        .iter()
                        .map(|c| values[c.index()])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if max == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        let shifted: f64 =
                            kids.iter().map(|c| (values[c.index()] - max).exp()).sum();
                        max + shifted.ln()
                    }
                }
            };
        }
        let stats = EvalStats {
            nodes_visited: self.eval_order().len() as u64,
        };
        Ok((values[self.root().index()], stats))
    }

    fn check_evidence(&self, evidence: &Evidence) -> Result<()> {
        if !evidence.matches(self.arities()) {
            return Err(Error::Data(
                "evidence does not match the circuit's variables/arities".into(),
            ));
        }
        Ok(())
    }
}
