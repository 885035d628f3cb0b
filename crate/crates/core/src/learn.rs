//! Greedy structure search over decision-tree CPDs with the circuit kept in
//! lockstep.
//!
//! The search keeps one candidate per (leaf, valid variable) pair. A
//! candidate's likelihood gain is computed once, when the leaf appears; its
//! edge cost is a dry run of the circuit rewrite, computed lazily, cached,
//! and invalidated when a later split touches the regions it depends on.
//! Each iteration scans candidates in decreasing gain order and stops at the
//! first point where no remaining candidate can beat the incumbent
//! (score gain ≤ likelihood gain because costs are nonnegative). The two
//! modes differ only in how much they trust stale caches: `Greedy`
//! recomputes every stale cost it visits and is exactly argmax; `Quick`
//! treats stale values as estimates and recomputes only would-be incumbents.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bn::{BayesNet, Estimator};
use crate::circuit::{Circuit, CostOutcome, LeafId, SplitDeltas};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::Var;

/// Candidate selection policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exact argmax of score gain each iteration.
    Greedy,
    /// Trusts cached (possibly outdated) edge costs as estimates; recomputes
    /// a cost only when the candidate would become the incumbent best. Not
    /// perfectly greedy, but every applied split still has a fresh cost.
    Quick,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Score penalty per circuit edge (≥ 0).
    pub edge_cost: f64,
    /// Score penalty per circuit parameter (≥ 0).
    pub param_cost: f64,
    pub mode: SearchMode,
    pub max_splits: Option<u64>,
    pub max_seconds: Option<f64>,
    pub estimator: Estimator,
    /// Consumed by data splitting in [`tune`]; recorded for reproducibility.
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            edge_cost: 0.1,
            param_cost: 1.0,
            mode: SearchMode::Greedy,
            max_splits: None,
            max_seconds: None,
            estimator: Estimator::Laplace,
            seed: 0,
        }
    }
}

/// The model selection score: log-likelihood minus the structural penalties.
pub fn score(log_likelihood: f64, edges: u64, params: u64, edge_cost: f64, param_cost: f64) -> f64 {
    log_likelihood - edge_cost * edges as f64 - param_cost * params as f64
}

/// Why the search stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No candidate has positive score gain (the natural fixpoint).
    NoImprovingSplit,
    SplitLimit,
    TimeLimit,
}

/// One accepted split, as logged in the trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Retired leaf and the variable it was split on.
    pub leaf: u32,
    pub variable: Var,
    /// Variable whose distribution the leaf described.
    pub target_variable: Var,
    /// Tree path of the retired leaf, e.g. "x3=1,x0=0".
    pub leaf_path: String,
    pub gain: f64,
    pub edge_delta: i64,
    pub param_delta: i64,
    pub node_delta: i64,
    pub score: f64,
    pub score_delta: f64,
    pub train_log_likelihood: f64,
    pub nodes: u64,
    pub edges: u64,
    pub parameters: u64,
    pub leaves: u64,
    pub candidates_live: u64,
    /// Dry-run invocations this iteration.
    pub cost_computations: u64,
    /// How many of those replaced a stale cache entry.
    pub stale_recomputations: u64,
    /// Cached costs marked stale by this iteration's split.
    pub candidates_invalidated: u64,
    pub wall_seconds: f64,
}

#[derive(Debug)]
pub struct LearnOutcome {
    pub bn: BayesNet,
    pub circuit: Circuit,
    pub config: LearnConfig,
    pub score: f64,
    pub train_log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub total_cost_computations: u64,
    pub total_stale_recomputations: u64,
    pub total_invalidated: u64,
    /// Mutual ancestors covering only part of a split variable's values (a
    /// normal consequence of re-splitting on an already-used variable; see
    /// the circuit module).
    pub partial_coverage_events: u64,
    /// Applied splits whose exact edge delta was negative. The early-stop
    /// rule assumes nonnegative costs, so these are worth eyes if they ever
    /// appear.
    pub negative_edge_cost_events: u64,
    pub wall_seconds: f64,
}

struct Candidate {
    leaf: LeafId,
    var: Var,
    /// Computed once when the leaf appears; exact while the leaf lives.
    gain: f64,
    /// (arity(var) − 1) · arity(target): parameter delta, known a priori.
    param_delta: i64,
    cost: Option<CostOutcome>,
    stale: bool,
    created: u64,
}

struct Search<'a> {
    data: &'a Dataset,
    cfg: LearnConfig,
    bn: BayesNet,
    circuit: Circuit,
    ll: f64,
    candidates: Vec<Candidate>,
    next_created: u64,
    // Per-iteration counters, reset by the loop.
    cost_computations: u64,
    stale_recomputations: u64,
    // Run totals.
    partial_coverage_events: u64,
    negative_edge_cost_events: u64,
}

impl Search<'_> {
    fn exact_score_gain(&self, gain: f64, d: &SplitDeltas) -> f64 {
        gain - self.cfg.edge_cost * d.edges as f64 - self.cfg.param_cost * d.params as f64
    }

    /// Upper bound on a candidate's score gain from an edge-delta lower
    /// bound (0 when nothing is known).
    fn bound_score_gain(&self, gain: f64, edge_lower_bound: i64, param_delta: i64) -> f64 {
        gain - self.cfg.edge_cost * edge_lower_bound as f64
            - self.cfg.param_cost * param_delta as f64
    }

    /// Runs the dry run for candidate `idx`, bounded so it can abort once
    /// the candidate provably cannot beat `incumbent` (or zero). Returns the
    /// fresh outcome, which is also cached.
    fn compute_cost(&mut self, idx: usize, incumbent: f64) -> Result<CostOutcome> {
        let c = &self.candidates[idx];
        let threshold = if self.cfg.edge_cost > 0.0 {
            let slack =
                c.gain - self.cfg.param_cost * c.param_delta as f64 - incumbent.max(0.0);
            Some(slack / self.cfg.edge_cost)
        } else {
            None
        };
        self.cost_computations += 1;
        if self.candidates[idx].stale {
            self.stale_recomputations += 1;
        }
        let outcome = self.circuit.split_cost(
            self.candidates[idx].leaf,
            self.candidates[idx].var,
            threshold,
        )?;
        if let CostOutcome::Exact(d) = &outcome {
            if d.params != self.candidates[idx].param_delta {
                return Err(Error::Internal(format!(
                    "dry-run parameter delta {} disagrees with the closed form {}",
                    d.params, self.candidates[idx].param_delta
                )));
            }
        }
        let c = &mut self.candidates[idx];
        c.cost = Some(outcome);
        c.stale = false;
        Ok(outcome)
    }

    /// Candidate indices in scan order: decreasing gain, then creation order.
    fn scan_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&self.candidates[a], &self.candidates[b]);
            cb.gain
                .total_cmp(&ca.gain)
                .then(ca.created.cmp(&cb.created))
        });
        order
    }

    /// Picks the next split, or `None` when no candidate has positive score
    /// gain. The returned candidate's cached cost is always fresh and exact
    /// (except with a zero edge penalty, where the winner's cost is refreshed
    /// at application instead).
    fn select(&mut self) -> Result<Option<usize>> {
        let mut best: Option<(usize, f64)> = None;
        for idx in self.scan_order() {
            let incumbent = best.map(|(_, s)| s).unwrap_or(0.0);
            let c = &self.candidates[idx];
            if c.gain <= incumbent {
                break; // no later candidate can score higher than its gain
            }
            let optimistic = self.bound_score_gain(c.gain, 0, c.param_delta);
            if optimistic <= incumbent {
                continue;
            }
            if self.cfg.edge_cost == 0.0 {
                // Edges don't affect the score; `optimistic` is the score.
                best = Some((idx, optimistic));
                continue;
            }
            let scored = match (c.cost, c.stale, self.cfg.mode) {
                (Some(CostOutcome::Exact(d)), false, _) => Some(self.exact_score_gain(c.gain, &d)),
                (Some(CostOutcome::AtLeastEdges(lb)), false, _) => {
                    // A valid bound: recompute only if it leaves room.
                    if self.bound_score_gain(c.gain, lb, c.param_delta) > incumbent {
                        None
                    } else {
                        continue;
                    }
                }
                (_, _, SearchMode::Greedy) => None, // stale or missing: recompute
                (cost, _, SearchMode::Quick) => {
                    // Trust the stale value as an estimate; recompute only
                    // would-be incumbents.
                    let estimate = match cost {
                        Some(CostOutcome::Exact(d)) => self.exact_score_gain(c.gain, &d),
                        Some(CostOutcome::AtLeastEdges(lb)) => {
                            self.bound_score_gain(c.gain, lb, c.param_delta)
                        }
                        None => optimistic,
                    };
                    if estimate <= incumbent {
                        continue;
                    }
                    None
                }
            };
            let score_gain = match scored {
                Some(s) => s,
                None => match self.compute_cost(idx, incumbent)? {
                    CostOutcome::Exact(d) => {
                        self.exact_score_gain(self.candidates[idx].gain, &d)
                    }
                    // Aborted: provably cannot beat max(incumbent, 0).
                    CostOutcome::AtLeastEdges(_) => continue,
                },
            };
            if score_gain > incumbent {
                best = Some((idx, score_gain));
            }
        }
        Ok(match best {
            Some((idx, s)) if s > 0.0 => Some(idx),
            _ => None,
        })
    }

    /// Applies candidate `idx` to the tree and the circuit, cross-checking
    /// the dry run against the real rewrite, then refreshes the candidate
    /// set. Returns (record fields that only this method knows).
    fn apply(&mut self, idx: usize) -> Result<(IterationRecord, u64)> {
        let leaf = self.candidates[idx].leaf;
        let var = self.candidates[idx].var;
        let gain = self.candidates[idx].gain;
        let expected = match (self.candidates[idx].cost, self.candidates[idx].stale) {
            (Some(CostOutcome::Exact(d)), false) => d,
            // Zero edge penalty skips costs during selection; refresh now so
            // the trace's edge accounting stays exact.
            _ => match self.compute_cost(idx, f64::INFINITY)? {
                CostOutcome::Exact(d) => d,
                CostOutcome::AtLeastEdges(_) => {
                    return Err(Error::Internal(
                        "unbounded dry run returned a bound".into(),
                    ))
                }
            },
        };

        let target_variable = self.bn.leaf(leaf).var;
        let leaf_path = self.bn.leaf(leaf).path_string();
        let scopes = self.circuit.invalidation_scopes(leaf, var)?;
        let new_leaves = self.bn.apply_split_to_tree(leaf, var, self.data)?;
        let thetas: Vec<Vec<f64>> = new_leaves
            .iter()
            .map(|&l| self.bn.leaf(l).theta.clone())
            .collect();
        let applied = self.circuit.apply_split(leaf, var, &new_leaves, &thetas)?;
        if applied.deltas != expected {
            return Err(Error::Internal(format!(
                "dry run predicted {expected:?} but the rewrite produced {:?}",
                applied.deltas
            )));
        }
        self.partial_coverage_events += applied.partial_coverage_events;
        if applied.deltas.edges < 0 {
            self.negative_edge_cost_events += 1;
        }
        self.ll += gain;

        let mut invalidated = 0u64;
        let bn = &self.bn;
        self.candidates.retain_mut(|c| {
            if c.leaf == leaf || !bn.is_valid_split(c.leaf, c.var) {
                return false;
            }
            if !c.stale && c.cost.is_some() && scopes.is_stale(c.leaf, c.var) {
                c.stale = true;
                invalidated += 1;
            }
            true
        });
        for &l in &new_leaves {
            let target = self.bn.leaf(l).var;
            for (v, g) in self.bn.candidate_gains(l, self.data) {
                self.candidates.push(Candidate {
                    leaf: l,
                    var: v,
                    gain: g,
                    param_delta: (self.bn.arity(v) as i64 - 1) * self.bn.arity(target) as i64,
                    cost: None,
                    stale: false,
                    created: self.next_created,
                });
                self.next_created += 1;
            }
        }

        let record = IterationRecord {
            iteration: 0, // filled by the loop
            leaf: leaf.0,
            variable: var,
            target_variable,
            leaf_path,
            gain,
            edge_delta: applied.deltas.edges,
            param_delta: applied.deltas.params,
            node_delta: applied.deltas.nodes,
            score: 0.0,       // filled by the loop
            score_delta: 0.0, // filled by the loop
            train_log_likelihood: self.ll,
            nodes: self.circuit.node_count() as u64,
            edges: self.circuit.edge_count(),
            parameters: self.circuit.parameter_count(),
            leaves: self.bn.leaf_count() as u64,
            candidates_live: self.candidates.len() as u64,
            cost_computations: 0,      // filled by the loop
            stale_recomputations: 0,   // filled by the loop
            candidates_invalidated: invalidated,
            wall_seconds: 0.0, // filled by the loop
        };
        Ok((record, invalidated))
    }
}

/// Learns a model: starts from independent marginals and greedily applies
/// the best-scoring split until none improves the score or a limit is hit.
pub fn learn(data: &Dataset, config: &LearnConfig) -> Result<LearnOutcome> {
    if data.num_rows() == 0 {
        return Err(Error::Data("cannot learn from an empty dataset".into()));
    }
    for (name, v) in [("edge", config.edge_cost), ("parameter", config.param_cost)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Config(format!(
                "{name} penalty must be finite and ≥ 0, got {v}"
            )));
        }
    }
    let started = Instant::now();

    let bn = BayesNet::fit_marginals(data, config.estimator)?;
    let circuit = Circuit::product_of_marginals(&bn.root_marginals()?)?;
    let ll = bn.training_log_likelihood();
    let mut search = Search {
        data,
        cfg: config.clone(),
        bn,
        circuit,
        ll,
        candidates: Vec::new(),
        next_created: 0,
        cost_computations: 0,
        stale_recomputations: 0,
        partial_coverage_events: 0,
        negative_edge_cost_events: 0,
    };
    let leaves: Vec<LeafId> = search.bn.live_leaves().collect();
    for l in leaves {
        let target = search.bn.leaf(l).var;
        for (v, g) in search.bn.candidate_gains(l, data) {
            search.candidates.push(Candidate {
                leaf: l,
                var: v,
                gain: g,
                param_delta: (search.bn.arity(v) as i64 - 1) * search.bn.arity(target) as i64,
                cost: None,
                stale: false,
                created: search.next_created,
            });
            search.next_created += 1;
        }
    }

    let initial_log_likelihood = search.ll;
    let mut current_score = score(
        search.ll,
        search.circuit.edge_count(),
        search.circuit.parameter_count(),
        config.edge_cost,
        config.param_cost,
    );
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut totals = (0u64, 0u64, 0u64); // cost computations, stale recomputes, invalidated
    let stop_reason;
    loop {
        if let Some(limit) = config.max_splits {
            if iterations.len() as u64 >= limit {
                stop_reason = StopReason::SplitLimit;
                break;
            }
        }
        if let Some(limit) = config.max_seconds {
            if started.elapsed().as_secs_f64() >= limit {
                stop_reason = StopReason::TimeLimit;
                break;
            }
        }
        let iteration_started = Instant::now();
        search.cost_computations = 0;
        search.stale_recomputations = 0;
        let Some(idx) = search.select()? else {
            stop_reason = StopReason::NoImprovingSplit;
            break;
        };
        let (mut record, invalidated) = search.apply(idx)?;
        let new_score = score(
            search.ll,
            search.circuit.edge_count(),
            search.circuit.parameter_count(),
            config.edge_cost,
            config.param_cost,
        );
        record.iteration = iterations.len() as u64 + 1;
        record.score_delta = new_score - current_score;
        record.score = new_score;
        record.cost_computations = search.cost_computations;
        record.stale_recomputations = search.stale_recomputations;
        record.wall_seconds = iteration_started.elapsed().as_secs_f64();
        current_score = new_score;
        totals.0 += search.cost_computations;
        totals.1 += search.stale_recomputations;
        totals.2 += invalidated;
        iterations.push(record);
    }

    Ok(LearnOutcome {
        score: current_score,
        train_log_likelihood: search.ll,
        initial_log_likelihood,
        iterations,
        stop_reason,
        total_cost_computations: totals.0,
        total_stale_recomputations: totals.1,
        total_invalidated: totals.2,
        partial_coverage_events: search.partial_coverage_events,
        negative_edge_cost_events: search.negative_edge_cost_events,
        wall_seconds: started.elapsed().as_secs_f64(),
        bn: search.bn,
        circuit: search.circuit,
        config: config.clone(),
    })
}

/// Penalty grid for [`tune`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuningGrid {
    pub edge_costs: Vec<f64>,
    pub param_costs: Vec<f64>,
    /// Share of rows held out for validation, in (0, 1).
    pub validation_fraction: f64,
}

/// One grid cell's result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuningCell {
    pub edge_cost: f64,
    pub param_cost: f64,
    pub validation_ll_per_row: f64,
    pub splits: u64,
    pub train_score: f64,
}

#[derive(Debug)]
pub struct TuningOutcome {
    pub cells: Vec<TuningCell>,
    pub best_edge_cost: f64,
    pub best_param_cost: f64,
    /// Final model, retrained on the full dataset with the best penalties.
    pub outcome: LearnOutcome,
}

/// Grid-searches the penalties: trains on a deterministic row split per
/// cell, scores held-out log-likelihood, then retrains the winning cell on
/// all rows. Cells run in parallel.
pub fn tune(data: &Dataset, base: &LearnConfig, grid: &TuningGrid) -> Result<TuningOutcome> {
    if grid.edge_costs.is_empty() || grid.param_costs.is_empty() {
        return Err(Error::Config("tuning grid must be nonempty".into()));
    }
    if !(grid.validation_fraction > 0.0 && grid.validation_fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must be in (0, 1), got {}",
            grid.validation_fraction
        )));
    }
    let (train, holdout) = data.split_rows(1.0 - grid.validation_fraction, base.seed)?;
    let pairs: Vec<(f64, f64)> = grid
        .edge_costs
        .iter()
        .flat_map(|&ke| grid.param_costs.iter().map(move |&kp| (ke, kp)))
        .collect();
    use rayon::prelude::*;
    let cells: Vec<TuningCell> = pairs
        .par_iter()
        .map(|&(ke, kp)| -> Result<TuningCell> {
            let cfg = LearnConfig {
                edge_cost: ke,
                param_cost: kp,
                ..base.clone()
            };
            let out = learn(&train, &cfg)?;
            let holdout_ll = out.bn.log_likelihood(&holdout)?;
            Ok(TuningCell {
                edge_cost: ke,
                param_cost: kp,
                validation_ll_per_row: holdout_ll / holdout.num_rows() as f64,
                splits: out.iterations.len() as u64,
                train_score: out.score,
            })
        })
        .collect::<Result<_>>()?;
    let best = cells
        .iter()
        .reduce(|a, b| {
            // Highest validation LL; ties prefer the stronger penalty
            // (cheaper circuit), i.e. the earlier grid entry.
            if b.validation_ll_per_row > a.validation_ll_per_row {
                b
            } else {
                a
            }
        })
        .expect("grid nonempty");
    let (best_edge_cost, best_param_cost) = (best.edge_cost, best.param_cost);
    let outcome = learn(
        data,
        &LearnConfig {
            edge_cost: best_edge_cost,
            param_cost: best_param_cost,
            ..base.clone()
        },
    )?;
    Ok(TuningOutcome {
        cells,
        best_edge_cost,
        best_param_cost,
        outcome,
    })
}
