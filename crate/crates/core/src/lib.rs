//! Learning arithmetic circuits for fast exact inference.
//!
//! An arithmetic circuit here is a rooted DAG of sum, product, indicator and
//! parameter nodes that computes the network polynomial of a Bayesian network
//! whose conditional distributions are decision trees. The learner starts from
//! the product-of-marginals circuit and greedily applies decision-tree splits,
//! scoring each candidate by its training log-likelihood gain minus penalties
//! proportional to the number of edges and parameters it would add. Because
//! the penalty is charged against the circuit itself, the cost of answering
//! queries on the learned model is controlled directly instead of through a
//! structural proxy such as treewidth.
//!
//! The crate provides:
//!
//! * [`circuit`] — the circuit representation, evaluation (linear and
//!   log-space), structural property checks, and a text format;
//! * [`bn`] — the equivalent Bayesian-network view: decision-tree CPDs,
//!   parameter estimation, likelihoods, and a min-fill treewidth estimate;
//! * [`learn`] — split search: mutual-ancestor analysis, incremental circuit
//!   rewriting, edge-cost dry runs with early abort, cost caching with
//!   conservative invalidation, and greedy / quick selection;
//! * [`infer`] — exact conditional queries by circuit evaluation and query-set
//!   utilities;
//! * [`gibbs`] — a Gibbs-sampling baseline over the Bayesian-network view;
//! * [`data`] / [`model`] — dataset and model-bundle I/O.

pub mod bn;
pub mod circuit;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod infer;
pub mod learn;
pub mod model;

pub use bn::BayesNet;
pub use circuit::{Circuit, Evidence};
pub use data::Dataset;
pub use error::{Error, Result};
pub use learn::{learn, LearnConfig, SearchMode};
pub use model::Model;

/// Variable index into the network's variable list.
pub type Var = usize;
