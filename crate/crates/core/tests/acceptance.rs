//! Acceptance suite. Each test is one numbered check with its tolerance in
//! the assertions; run `cargo test --test acceptance -- --nocapture` to see
//! the measured numbers behind each pass/fail line.
//!
//!  1. circuit evaluation equals the network joint after random splits
//!  2. smooth/decomposable/deterministic after every applied split
//!  3. dry-run edge costs account exactly for the final edge count
//!  4. cost invalidation never misses a changed candidate
//!  5. greedy selection matches an exhaustive fresh-recomputation argmax
//!  6. exact conditional queries match brute-force enumeration
//!  7. Gibbs estimates approach exact answers as effort grows
//!  8. quick mode tracks greedy accuracy with fewer cost computations
//!  9. score strictly improves and the search terminates
//! 10. large-scale benchmark reproduction (gated on a prepared dataset)

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use aclearn::bn::{BayesNet, Estimator};
use aclearn::circuit::{check_properties, CostOutcome, Evidence, LeafId};
use aclearn::gibbs::{gibbs_query, GibbsConfig};
use aclearn::infer::{brute_force_conditional, generate_queries, query_conditional, Query};
use aclearn::learn::{learn, LearnConfig, SearchMode, StopReason};
use aclearn::{Circuit, Dataset, Var};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

// ---------------------------------------------------------------- data gen

/// A planted network over binary variables with tree CPDs: variable 0 is a
/// biased coin; each later variable picks one or two earlier parents, and the
/// second parent only matters in the first parent's `1` context.
struct Planted {
    n: usize,
    p0: f64,
    /// (parent_a, parent_b, p1 | a=0, p1 | a=1 b=0, p1 | a=1 b=1)
    cpds: Vec<(usize, usize, f64, f64, f64)>,
}

impl Planted {
    fn new(n: usize, seed: u64) -> Planted {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut p = || 0.1 + 0.8 * rng.random::<f64>();
        let p0 = p();
        let mut cpds = Vec::with_capacity(n - 1);
        let mut rng2 = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
        for v in 1..n {
            let a = rng2.random_range(0..v);
            let b = if v >= 2 {
                let mut b = rng2.random_range(0..v);
                while b == a {
                    b = rng2.random_range(0..v);
                }
                b
            } else {
                a
            };
            cpds.push((a, b, p(), p(), p()));
        }
        Planted { n, p0, cpds }
    }

    fn sample(&self, rows: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row = vec![0u8; self.n];
            row[0] = u8::from(rng.random::<f64>() < self.p0);
            for v in 1..self.n {
                let (a, b, p_a0, p_a1b0, p_a1b1) = self.cpds[v - 1];
                let p1 = if row[a] == 0 {
                    p_a0
                } else if row[b] == 0 {
                    p_a1b0
                } else {
                    p_a1b1
                };
                row[v] = u8::from(rng.random::<f64>() < p1);
            }
            out.push(row);
        }
        Dataset::new(vec![2; self.n], out).unwrap()
    }
}

fn planted_dataset(n: usize, rows: usize, seed: u64) -> Dataset {
    Planted::new(n, seed).sample(rows, seed.wrapping_add(1))
}

fn uniform_dataset(n: usize, rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u8>> = (0..rows)
        .map(|_| (0..n).map(|_| rng.random_range(0..2u8)).collect())
        .collect();
    Dataset::new(vec![2; n], rows).unwrap()
}

fn valid_pairs(bn: &BayesNet) -> Vec<(LeafId, Var)> {
    let mut out = Vec::new();
    for l in bn.live_leaves().collect::<Vec<_>>() {
        for v in 0..bn.num_vars() {
            if bn.is_valid_split(l, v) {
                out.push((l, v));
            }
        }
    }
    out
}

fn exact_cost(c: &Circuit, leaf: LeafId, var: Var) -> aclearn::circuit::SplitDeltas {
    match c.split_cost(leaf, var, None).unwrap() {
        CostOutcome::Exact(d) => d,
        CostOutcome::AtLeastEdges(_) => unreachable!("no abort threshold given"),
    }
}

fn apply_one(bn: &mut BayesNet, c: &mut Circuit, data: &Dataset, leaf: LeafId, var: Var) -> aclearn::circuit::SplitApplied {
    let new_leaves = bn.apply_split_to_tree(leaf, var, data).unwrap();
    let thetas: Vec<Vec<f64>> = new_leaves.iter().map(|l| bn.leaf(*l).theta.clone()).collect();
    c.apply_split(leaf, var, &new_leaves, &thetas).unwrap()
}

fn all_assignments(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u32 << n).map(move |bits| (0..n).map(|v| ((bits >> v) & 1) as u8).collect())
}

// ------------------------------------------- shared harness: criteria 1-3

struct SplitRunStats {
    runs: usize,
    total_splits: u64,
    property_failures: u64,
    cost_mismatches: u64,
    accounting_failures: u64,
    max_joint_err: f64,
    partial_coverage_events: u64,
    elapsed_seconds: f64,
}

static SPLIT_RUNS: OnceLock<SplitRunStats> = OnceLock::new();

/// 200 randomized runs of 3..=10 binary variables: fit marginals, apply up
/// to 30 uniformly random valid splits, and record everything criteria 1-3
/// need. Deterministic (seeded per run).
fn split_runs() -> &'static SplitRunStats {
    SPLIT_RUNS.get_or_init(|| {
        let started = Instant::now();
        let mut stats = SplitRunStats {
            runs: 200,
            total_splits: 0,
            property_failures: 0,
            cost_mismatches: 0,
            accounting_failures: 0,
            max_joint_err: 0.0,
            partial_coverage_events: 0,
            elapsed_seconds: 0.0,
        };
        for run in 0..stats.runs as u64 {
            let n = 3 + (run % 8) as usize; // 3..=10
            let rows = 30 + (run % 5) as usize * 20;
            let data = if run % 2 == 0 {
                planted_dataset(n, rows, run)
            } else {
                uniform_dataset(n, rows, run)
            };
            let mut bn = BayesNet::fit_marginals(&data, Estimator::Laplace).unwrap();
            let mut circuit =
                Circuit::product_of_marginals(&bn.root_marginals().unwrap()).unwrap();
            let initial_edges = circuit.edge_count() as i64;
            let mut edge_cost_sum = 0i64;
            let mut rng = ChaCha12Rng::seed_from_u64(run ^ 0xac5e97);

            for _ in 0..30 {
                let pairs = valid_pairs(&bn);
                if pairs.is_empty() || circuit.edge_count() > 50_000 {
                    break;
                }
                let (leaf, var) = pairs[rng.random_range(0..pairs.len())];
                let predicted = exact_cost(&circuit, leaf, var);
                let applied = apply_one(&mut bn, &mut circuit, &data, leaf, var);
                stats.total_splits += 1;
                stats.partial_coverage_events += applied.partial_coverage_events;
                if predicted != applied.deltas {
                    stats.cost_mismatches += 1;
                }
                edge_cost_sum += predicted.edges;
                if !check_properties(&circuit).all_hold() {
                    stats.property_failures += 1;
                }
            }

            if initial_edges + edge_cost_sum != circuit.edge_count() as i64 {
                stats.accounting_failures += 1;
            }
            for row in all_assignments(n) {
                let ev = Evidence::from_assignment(data.arities(), &row).unwrap();
                let err = (circuit.evaluate(&ev).unwrap() - bn.joint_probability(&row)).abs();
                stats.max_joint_err = stats.max_joint_err.max(err);
            }
        }
        stats.elapsed_seconds = started.elapsed().as_secs_f64();
        stats
    })
}

#[test]
fn criterion_01_circuit_matches_network_joint() {
    let s = split_runs();
    println!(
        "criterion 1: max |circuit - network| = {:.3e} over {} runs / {} splits in {:.1}s",
        s.max_joint_err, s.runs, s.total_splits, s.elapsed_seconds
    );
    assert!(s.max_joint_err <= 1e-9, "max joint error {}", s.max_joint_err);
    assert!(
        s.elapsed_seconds <= 120.0,
        "harness took {:.1}s, budget is 120s",
        s.elapsed_seconds
    );
}

#[test]
fn criterion_02_properties_hold_after_every_split() {
    let s = split_runs();
    println!(
        "criterion 2: {} splits applied, {} property violations ({} partial-coverage events)",
        s.total_splits, s.property_failures, s.partial_coverage_events
    );
    assert!(s.total_splits >= 2000, "only {} splits applied", s.total_splits);
    assert_eq!(s.property_failures, 0);
}

#[test]
fn criterion_03_edge_accounting_is_exact() {
    let s = split_runs();
    println!(
        "criterion 3: {} cost mismatches, {} accounting failures over {} runs",
        s.cost_mismatches, s.accounting_failures, s.runs
    );
    assert_eq!(s.cost_mismatches, 0);
    assert_eq!(s.accounting_failures, 0);
}

// ------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_invalidation_never_misses_a_changed_cost() {
    let mut checked = 0u64;
    let mut changed = 0u64;
    let mut misses = 0u64;
    let mut false_stale = 0u64;

    for run in 0..50u64 {
        let n = 4 + (run % 5) as usize; // 4..=8
        let data = planted_dataset(n, 60, 1000 + run);
        let mut bn = BayesNet::fit_marginals(&data, Estimator::Laplace).unwrap();
        let mut circuit = Circuit::product_of_marginals(&bn.root_marginals().unwrap()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(run ^ 0x1417);

        let mut cache: HashMap<(u32, Var), i64> = valid_pairs(&bn)
            .into_iter()
            .map(|(l, v)| ((l.0, v), exact_cost(&circuit, l, v).edges))
            .collect();

        for _ in 0..6 {
            let pairs = valid_pairs(&bn);
            if pairs.is_empty() {
                break;
            }
            let (leaf, var) = pairs[rng.random_range(0..pairs.len())];
            let scopes = circuit.invalidation_scopes(leaf, var).unwrap();
            apply_one(&mut bn, &mut circuit, &data, leaf, var);

            // Full-recompute oracle: every still-valid pair's true cost now.
            let mut next_cache = HashMap::new();
            for (l, v) in valid_pairs(&bn) {
                let now = exact_cost(&circuit, l, v).edges;
                next_cache.insert((l.0, v), now);
                if let Some(&before) = cache.get(&(l.0, v)) {
                    checked += 1;
                    let cost_changed = before != now;
                    let flagged = scopes.is_stale(l, v);
                    if cost_changed {
                        changed += 1;
                        if !flagged {
                            misses += 1;
                            eprintln!(
                                "MISS run {run}: ({}, {v}) cost {before} -> {now} not flagged",
                                l.0
                            );
                        }
                    } else if flagged {
                        false_stale += 1;
                    }
                }
            }
            cache = next_cache;
        }
    }

    println!(
        "criterion 4: {checked} cached pairs checked, {changed} truly changed, {misses} misses, \
         false-stale rate {:.1}% ({false_stale})",
        100.0 * false_stale as f64 / checked.max(1) as f64
    );
    assert_eq!(misses, 0, "invalidation missed {misses} changed costs");
}

// ------------------------------------------------------------- criterion 5

#[test]
fn criterion_05_greedy_matches_exhaustive_argmax() {
    let mut iterations_checked = 0u64;
    for run in 0..20u64 {
        let n = 6 + (run % 7) as usize; // 6..=12
        let data = planted_dataset(n, 250 + 25 * (run % 4) as usize, 2000 + run);
        let config = LearnConfig {
            edge_cost: 0.05,
            param_cost: 0.3,
            mode: SearchMode::Greedy,
            max_splits: Some(12),
            ..LearnConfig::default()
        };
        let out = learn(&data, &config).unwrap();

        // Replay with a fresh network and circuit, checking each applied
        // split against an exhaustive fresh scan of every candidate.
        let mut bn = BayesNet::fit_marginals(&data, config.estimator).unwrap();
        let mut circuit = Circuit::product_of_marginals(&bn.root_marginals().unwrap()).unwrap();
        for record in &out.iterations {
            let mut best = f64::NEG_INFINITY;
            let mut applied_score_gain = None;
            for l in bn.live_leaves().collect::<Vec<_>>() {
                for (v, gain) in bn.candidate_gains(l, &data) {
                    let d = exact_cost(&circuit, l, v);
                    let sg = gain
                        - config.edge_cost * d.edges as f64
                        - config.param_cost * d.params as f64;
                    if sg > best {
                        best = sg;
                    }
                    if l.0 == record.leaf && v == record.variable {
                        applied_score_gain = Some(sg);
                        assert!(
                            (gain - record.gain).abs() <= 1e-9,
                            "gain drift: oracle {gain} vs recorded {}",
                            record.gain
                        );
                        assert_eq!(d.edges, record.edge_delta, "edge delta drift");
                    }
                }
            }
            let applied = applied_score_gain.expect("applied split is a live candidate");
            assert_eq!(
                applied, best,
                "run {run} iter {}: applied split's score gain {applied} \
                 is not the exhaustive max {best}",
                record.iteration
            );
            iterations_checked += 1;
            apply_one(&mut bn, &mut circuit, &data, LeafId(record.leaf), record.variable);
        }
    }
    println!("criterion 5: {iterations_checked} greedy iterations matched the exhaustive argmax");
    assert!(iterations_checked >= 20, "searches accepted too few splits to be meaningful");
}

// ------------------------------------------------------------- criterion 6

#[test]
fn criterion_06_exact_queries_match_enumeration() {
    let mut total = 0u64;
    let mut max_err = 0.0f64;
    let mut max_visit_ratio = 0.0f64;
    for run in 0..5u64 {
        let n = 6 + run as usize; // 6..=10
        let data = planted_dataset(n, 500, 3000 + run);
        let config = LearnConfig {
            edge_cost: 0.02,
            param_cost: 0.2,
            max_splits: Some(10),
            ..LearnConfig::default()
        };
        let out = learn(&data, &config).unwrap();
        let queries = generate_queries(&data, 0.3, 0.3, 4000 + run).unwrap();
        for q in queries.iter().take(100) {
            let ans = query_conditional(&out.circuit, q).unwrap();
            let oracle = brute_force_conditional(&out.bn, q).unwrap();
            max_err = max_err.max((ans.log_prob - oracle).abs());
            max_visit_ratio = max_visit_ratio
                .max(ans.nodes_visited as f64 / out.circuit.node_count() as f64);
            total += 1;
        }
    }
    println!(
        "criterion 6: {total} queries, max log-space error {max_err:.3e}, \
         max visits/nodes ratio {max_visit_ratio:.2}"
    );
    assert_eq!(total, 500);
    assert!(max_err <= 1e-9, "max log-space error {max_err}");
    assert!(max_visit_ratio <= 2.0, "visit ratio {max_visit_ratio}");
}

// ------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_gibbs_approaches_exact_answers() {
    let started = Instant::now();
    // One fixed 8-variable model, deterministic end to end.
    let data = planted_dataset(8, 3000, 777);
    let out = learn(
        &data,
        &LearnConfig { edge_cost: 0.05, param_cost: 0.5, ..LearnConfig::default() },
    )
    .unwrap();

    // 100 deterministic single-variable conditionals with 2 evidence vars.
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let queries: Vec<Query> = (0..100)
        .map(|_| {
            let mut vars: Vec<Var> = (0..8).collect();
            vars.shuffle(&mut rng);
            Query {
                targets: vec![(vars[0], rng.random_range(0..2))],
                evidence: vec![
                    (vars[1], rng.random_range(0..2)),
                    (vars[2], rng.random_range(0..2)),
                ],
            }
        })
        .collect();

    let median_err = |config: &dyn Fn(u64) -> GibbsConfig| -> f64 {
        let mut errs: Vec<f64> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let exact = query_conditional(&out.circuit, q).unwrap().log_prob.exp();
                let est = gibbs_query(&out.bn, q, &config(9000 + i as u64)).unwrap().exp();
                (est - exact).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        (errs[49] + errs[50]) / 2.0
    };

    let medium = median_err(&GibbsConfig::medium);
    let very_slow = median_err(&GibbsConfig::very_slow);
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "criterion 7: median |estimate - exact| medium {medium:.4}, very-slow {very_slow:.4}, \
         in {elapsed:.0}s"
    );
    assert!(medium <= 0.03, "medium-effort median error {medium}");
    assert!(very_slow <= 0.01, "very-slow median error {very_slow}");
    assert!(elapsed <= 300.0, "took {elapsed:.0}s, budget is 300s");
}

// ------------------------------------------------------------- criterion 8

#[test]
fn criterion_08_quick_mode_tracks_greedy_with_fewer_cost_computations() {
    let planted = Planted::new(20, 8080);
    let train = planted.sample(5000, 8081);
    let test = planted.sample(2000, 8082);

    let base = LearnConfig { edge_cost: 0.1, param_cost: 1.0, ..LearnConfig::default() };
    let greedy = learn(
        &train,
        &LearnConfig { mode: SearchMode::Greedy, ..base.clone() },
    )
    .unwrap();
    let quick = learn(
        &train,
        &LearnConfig { mode: SearchMode::Quick, ..base },
    )
    .unwrap();

    let test_ll = |bn: &BayesNet| -> f64 {
        (0..test.num_rows()).map(|r| bn.log_joint(test.row(r))).sum()
    };
    let ll_greedy = test_ll(&greedy.bn);
    let ll_quick = test_ll(&quick.bn);
    let rel_gap = (ll_quick - ll_greedy).abs() / ll_greedy.abs();
    println!(
        "criterion 8: test LL greedy {ll_greedy:.1} ({} splits, {} cost computations) vs \
         quick {ll_quick:.1} ({} splits, {} cost computations), gap {:.3}%",
        greedy.iterations.len(),
        greedy.total_cost_computations,
        quick.iterations.len(),
        quick.total_cost_computations,
        100.0 * rel_gap
    );
    assert!(rel_gap <= 0.01, "quick test LL deviates {:.3}%", 100.0 * rel_gap);
    assert!(
        quick.total_cost_computations < greedy.total_cost_computations,
        "quick ran {} cost computations, greedy {}",
        quick.total_cost_computations,
        greedy.total_cost_computations
    );
}

// ------------------------------------------------------------- criterion 9

#[test]
fn criterion_09_score_monotonicity_and_termination() {
    let data = planted_dataset(6, 400, 9090);

    // Every accepted split strictly improves the penalized score.
    let normal = learn(
        &data,
        &LearnConfig { edge_cost: 0.05, param_cost: 0.3, ..LearnConfig::default() },
    )
    .unwrap();
    assert!(!normal.iterations.is_empty());
    for it in &normal.iterations {
        assert!(it.score_delta > 0.0, "iteration {} gained {}", it.iteration, it.score_delta);
    }

    // A prohibitive edge penalty accepts nothing.
    let blocked = learn(
        &data,
        &LearnConfig { edge_cost: 1e6, param_cost: 1.0, ..LearnConfig::default() },
    )
    .unwrap();
    assert_eq!(blocked.iterations.len(), 0);
    assert_eq!(blocked.stop_reason, StopReason::NoImprovingSplit);

    // With zero penalties the search still terminates, and only because
    // gains hit zero — not because it ran into the split cap.
    let free = learn(
        &data,
        &LearnConfig {
            edge_cost: 0.0,
            param_cost: 0.0,
            max_splits: Some(10_000),
            ..LearnConfig::default()
        },
    )
    .unwrap();
    assert_eq!(free.stop_reason, StopReason::NoImprovingSplit);
    assert!((free.iterations.len() as u64) < 10_000);
    for it in &free.iterations {
        assert!(it.score_delta > 0.0);
    }
    println!(
        "criterion 9: {} scored splits all positive; 10^6 edge cost accepted 0; \
         zero penalties stopped at zero gain after {} splits",
        normal.iterations.len(),
        free.iterations.len()
    );
}

// ------------------------------------------------------------ criterion 10

#[test]
fn criterion_10_msweb_scale_check() {
    let dir = match std::env::var("ACLEARN_MSWEB") {
        Ok(dir) => dir,
        Err(_) => {
            println!(
                "criterion 10: SKIP — set ACLEARN_MSWEB=<dir> containing msweb.train.data and \
                 msweb.test.data (convert the public MSWeb distribution with \
                 scripts/msweb_prepare.py; the dataset is not bundled and this environment \
                 has no network access)"
            );
            return;
        }
    };
    let train = Dataset::load(format!("{dir}/msweb.train.data")).unwrap();
    let test = Dataset::load(format!("{dir}/msweb.test.data")).unwrap();
    assert_eq!(train.arities(), test.arities());

    let config = LearnConfig {
        edge_cost: 0.02,
        param_cost: 0.5,
        mode: SearchMode::Quick,
        ..LearnConfig::default()
    };
    let out = learn(&train, &config).unwrap();
    let held_out: f64 = (0..test.num_rows())
        .map(|r| out.bn.log_joint(test.row(r)))
        .sum::<f64>()
        / test.num_rows() as f64;
    let edges = out.circuit.edge_count() as f64;
    println!(
        "criterion 10: held-out LL/example {held_out:.3} (reference -9.85 ± 0.5), \
         {edges} edges (reference 256000 within 3x), {} splits in {:.0}s",
        out.iterations.len(),
        out.wall_seconds
    );
    assert!(
        (held_out - (-9.85)).abs() <= 0.5,
        "held-out log-likelihood per example {held_out}"
    );
    assert!(
        (256_000.0 / 3.0..=256_000.0 * 3.0).contains(&edges),
        "edge count {edges}"
    );
}
