//! Command-line driver: learn circuit models from discrete data, answer
//! queries exactly or by Gibbs sampling, and inspect model structure.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data or files,
//! 3 internal invariant violation.

use std::fs;
use std::io::Write;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use aclearn::bn::treewidth_of_order;
use aclearn::bn::Estimator;
use aclearn::gibbs::{gibbs_query, GibbsConfig};
use aclearn::infer::{evaluate_queryset, generate_queries, parse_queries};
use aclearn::learn::{tune, LearnConfig, TuningGrid};
use aclearn::model::{file_digest, Model};
use aclearn::{learn, Dataset, Error, SearchMode};

#[derive(Parser)]
#[command(
    name = "aclearn",
    version,
    about = "Learn arithmetic-circuit models of discrete data and query them exactly"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    /// Exact argmax selection each iteration.
    Greedy,
    /// Reuse possibly-stale edge costs; recompute only would-be winners.
    Quick,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> SearchMode {
        match m {
            ModeArg::Greedy => SearchMode::Greedy,
            ModeArg::Quick => SearchMode::Quick,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    /// Add-one smoothing (always-positive parameters).
    Laplace,
    /// Raw relative frequencies; fails if any reached leaf has a zero count.
    MaximumLikelihood,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Estimator {
        match e {
            EstimatorArg::Laplace => Estimator::Laplace,
            EstimatorArg::MaximumLikelihood => Estimator::MaximumLikelihood,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    /// 1 chain, 100 burn-in sweeps, 1000 samples.
    Fast,
    /// 10 chains, 100 burn-in sweeps, 1000 samples each.
    Medium,
    /// 10 chains, 1000 burn-in sweeps, 10000 samples each.
    Slow,
    /// 10 chains, 10000 burn-in sweeps, 100000 samples each.
    VerySlow,
}

impl ScenarioArg {
    fn config(self, seed: u64) -> GibbsConfig {
        match self {
            ScenarioArg::Fast => GibbsConfig::fast(seed),
            ScenarioArg::Medium => GibbsConfig::medium(seed),
            ScenarioArg::Slow => GibbsConfig::slow(seed),
            ScenarioArg::VerySlow => GibbsConfig::very_slow(seed),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model and save it as a bundle.
    Learn {
        /// Dataset file: a comma-separated arity line, then one
        /// comma-separated row of value indices per line.
        #[arg(long)]
        data: PathBuf,
        /// Where to write the model bundle.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-iteration trace (one JSON record per line).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Score penalty per circuit edge.
        #[arg(long, default_value_t = 0.1)]
        edge_cost: f64,
        /// Score penalty per circuit parameter.
        #[arg(long, default_value_t = 1.0)]
        param_cost: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
        mode: ModeArg,
        #[arg(long)]
        max_splits: Option<u64>,
        #[arg(long)]
        max_seconds: Option<f64>,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Laplace)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean log-likelihood of a dataset under a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional per-row log-probabilities (one JSON record per line).
        #[arg(long)]
        per_row: Option<PathBuf>,
    },
    /// Answer queries exactly on the model's circuit.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// Query file: one `q var=val ... | e var=val ...` per line.
        #[arg(long)]
        queries: PathBuf,
        /// Per-query results as JSON lines (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the same queries by Gibbs sampling on the network view.
    Gibbs {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value_t = ScenarioArg::Medium)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-query results as JSON lines (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one random query per dataset row.
    Genqueries {
        #[arg(long)]
        data: PathBuf,
        /// Fraction of variables to query per row.
        #[arg(long, default_value_t = 0.3)]
        query_fraction: f64,
        /// Fraction of variables to observe per row.
        #[arg(long, default_value_t = 0.0)]
        evidence_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Query lines (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structural statistics of a saved model.
    Stats {
        #[arg(long)]
        model: PathBuf,
    },
    /// Grid-search penalties on a validation split, then retrain on all rows.
    Tune {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated edge-cost grid, e.g. 1.0,0.1,0.01.
        #[arg(long, value_delimiter = ',', required = true)]
        edge_costs: Vec<f64>,
        /// Comma-separated parameter-cost grid.
        #[arg(long, value_delimiter = ',', required = true)]
        param_costs: Vec<f64>,
        /// Share of rows held out for validation.
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Greedy)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Save the retrained model here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendering but use exit code 1 for usage problems
            // (clap's default is 2, which this tool reserves for data
            // errors). Help and version requests still succeed.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal panic (this is a bug)");
            ExitCode::from(3)
        }
    }
}

/// Writes JSON lines to a file, or to stdout when no path is given.
fn emit_lines(path: Option<&Path>, lines: &[String]) -> aclearn::Result<()> {
    match path {
        Some(p) => {
            let mut out = String::new();
            for l in lines {
                out.push_str(l);
                out.push('\n');
            }
            fs::write(p, out)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for l in lines {
                writeln!(lock, "{l}")?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> aclearn::Result<()> {
    match cli.command {
        Command::Learn {
            data,
            out,
            trace,
            edge_cost,
            param_cost,
            mode,
            max_splits,
            max_seconds,
            estimator,
            seed,
        } => {
            let dataset = Dataset::load(&data)?;
            let digest = file_digest(&data)?;
            let config = LearnConfig {
                edge_cost,
                param_cost,
                mode: mode.into(),
                max_splits,
                max_seconds,
                estimator: estimator.into(),
                seed,
            };
            let outcome = learn(&dataset, &config)?;
            if let Some(trace_path) = trace {
                let lines: Vec<String> = outcome
                    .iterations
                    .iter()
                    .map(|it| serde_json::to_string(it).expect("record serializes"))
                    .collect();
                emit_lines(Some(&trace_path), &lines)?;
            }
            let summary = json!({
                "splits": outcome.iterations.len(),
                "stop_reason": outcome.stop_reason,
                "score": outcome.score,
                "train_log_likelihood": outcome.train_log_likelihood,
                "train_log_likelihood_per_row": outcome.train_log_likelihood
                    / dataset.num_rows() as f64,
                "initial_log_likelihood": outcome.initial_log_likelihood,
                "nodes": outcome.circuit.node_count(),
                "edges": outcome.circuit.edge_count(),
                "parameters": outcome.circuit.parameter_count(),
                "leaves": outcome.bn.live_leaves().count(),
                "cost_computations": outcome.total_cost_computations,
                "stale_recomputations": outcome.total_stale_recomputations,
                "candidates_invalidated": outcome.total_invalidated,
                "partial_coverage_events": outcome.partial_coverage_events,
                "negative_edge_cost_events": outcome.negative_edge_cost_events,
                "wall_seconds": outcome.wall_seconds,
                "model_path": out,
            });
            let rows = dataset.num_rows() as u64;
            Model::from_outcome(outcome, rows, Some(digest)).save(&out)?;
            println!("{summary}");
        }
        Command::Eval {
            model,
            data,
            per_row,
        } => {
            let model = Model::load(&model)?;
            let dataset = Dataset::load(&data)?;
            if dataset.arities() != model.bn.arities() {
                return Err(Error::Data(format!(
                    "dataset arities {:?} do not match the model's {:?}",
                    dataset.arities(),
                    model.bn.arities()
                )));
            }
            let mut total = 0.0;
            let mut lines = Vec::new();
            for r in 0..dataset.num_rows() {
                let lp = model.bn.log_joint(dataset.row(r));
                total += lp;
                if per_row.is_some() {
                    lines.push(json!({ "row": r, "log_prob": lp }).to_string());
                }
            }
            if let Some(path) = per_row {
                emit_lines(Some(&path), &lines)?;
            }
            println!(
                "{}",
                json!({
                    "rows": dataset.num_rows(),
                    "log_likelihood": total,
                    "log_likelihood_per_row": total / dataset.num_rows().max(1) as f64,
                })
            );
        }
        Command::Infer {
            model,
            queries,
            out,
        } => {
            let model = Model::load(&model)?;
            let text = fs::read_to_string(&queries)?;
            let queries = parse_queries(&text, model.circuit.arities())?;
            let report = evaluate_queryset(&model.circuit, &queries)?;
            let lines: Vec<String> = report
                .records
                .iter()
                .map(|r| serde_json::to_string(r).expect("record serializes"))
                .collect();
            emit_lines(out.as_deref(), &lines)?;
            println!(
                "{}",
                json!({
                    "queries": report.total,
                    "mean_log_prob_per_variable": report.mean_log_prob_per_variable,
                    "impossible_evidence": report.impossible_evidence,
                })
            );
        }
        Command::Gibbs {
            model,
            queries,
            scenario,
            seed,
            out,
        } => {
            let model = Model::load(&model)?;
            let text = fs::read_to_string(&queries)?;
            let queries = parse_queries(&text, model.bn.arities())?;
            let mut lines = Vec::with_capacity(queries.len());
            let mut sum_per_variable = 0.0;
            for (index, q) in queries.iter().enumerate() {
                // Each query gets an independent deterministic seed stream.
                let config = scenario.config(seed.wrapping_add(index as u64));
                let started = Instant::now();
                let log_prob = gibbs_query(&model.bn, q, &config)?;
                let per_variable = if q.targets.is_empty() {
                    0.0
                } else {
                    log_prob / q.targets.len() as f64
                };
                sum_per_variable += per_variable;
                lines.push(
                    json!({
                        "index": index,
                        "log_prob": log_prob,
                        "per_variable": per_variable,
                        "micros": started.elapsed().as_micros() as u64,
                    })
                    .to_string(),
                );
            }
            emit_lines(out.as_deref(), &lines)?;
            println!(
                "{}",
                json!({
                    "queries": queries.len(),
                    "mean_log_prob_per_variable":
                        sum_per_variable / queries.len().max(1) as f64,
                })
            );
        }
        Command::Genqueries {
            data,
            query_fraction,
            evidence_fraction,
            seed,
            out,
        } => {
            let dataset = Dataset::load(&data)?;
            let queries = generate_queries(&dataset, query_fraction, evidence_fraction, seed)?;
            let lines: Vec<String> = queries.iter().map(|q| q.to_line()).collect();
            emit_lines(out.as_deref(), &lines)?;
        }
        Command::Stats { model } => {
            let model = Model::load(&model)?;
            let tw = model.bn.estimate_treewidth_minfill();
            let replayed = treewidth_of_order(&model.bn, &tw.order);
            if replayed != tw.width {
                return Err(Error::Internal(format!(
                    "treewidth witness replays to {replayed}, estimate said {}",
                    tw.width
                )));
            }
            println!(
                "{}",
                json!({
                    "variables": model.bn.num_vars(),
                    "nodes": model.circuit.node_count(),
                    "edges": model.circuit.edge_count(),
                    "parameters": model.circuit.parameter_count(),
                    "leaves": model.bn.live_leaves().count(),
                    "max_parents": model.bn.max_parents(),
                    "mean_parents": model.bn.mean_parents(),
                    "treewidth_estimate": tw.width,
                    "splits": model.meta.splits,
                    "score": model.meta.score,
                })
            );
        }
        Command::Tune {
            data,
            edge_costs,
            param_costs,
            validation_fraction,
            mode,
            seed,
            out,
        } => {
            let dataset = Dataset::load(&data)?;
            let digest = file_digest(&data)?;
            let base = LearnConfig {
                mode: mode.into(),
                seed,
                ..LearnConfig::default()
            };
            let grid = TuningGrid {
                edge_costs,
                param_costs,
                validation_fraction,
            };
            let tuned = tune(&dataset, &base, &grid)?;
            for cell in &tuned.cells {
                println!("{}", serde_json::to_string(cell).expect("cell serializes"));
            }
            let summary = json!({
                "best_edge_cost": tuned.best_edge_cost,
                "best_param_cost": tuned.best_param_cost,
                "final_splits": tuned.outcome.iterations.len(),
                "final_score": tuned.outcome.score,
                "model_path": out,
            });
            if let Some(path) = out {
                let rows = dataset.num_rows() as u64;
                Model::from_outcome(tuned.outcome, rows, Some(digest)).save(&path)?;
            }
            println!("{summary}");
        }
    }
    Ok(())
}
