//! Gibbs-sampling baseline over the Bayesian-network view.
//!
//! Chains clamp the evidence, initialize every other variable uniformly at
//! random, and sweep the variables in index order, resampling each from its
//! Markov-blanket conditional. After burn-in, each sweep contributes one
//! sample; a sample is a hit when the full query configuration matches.
//! Chains run in parallel with seeds derived deterministically from the
//! scenario seed, and their counts are pooled into one smoothed estimate
//! (hits + 1/|Q states|) / (samples + 1).

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::bn::BayesNet;
use crate::error::{Error, Result};
use crate::infer::Query;
use crate::Var;

/// Sampling effort preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GibbsConfig {
    pub chains: u64,
    /// Discarded sweeps per chain before sampling starts.
    pub burn_in: u64,
    pub samples_per_chain: u64,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn fast(seed: u64) -> GibbsConfig {
        GibbsConfig { chains: 1, burn_in: 100, samples_per_chain: 1000, seed }
    }

    pub fn medium(seed: u64) -> GibbsConfig {
        GibbsConfig { chains: 10, burn_in: 100, samples_per_chain: 1000, seed }
    }

    pub fn slow(seed: u64) -> GibbsConfig {
        GibbsConfig { chains: 10, burn_in: 1000, samples_per_chain: 10_000, seed }
    }

    pub fn very_slow(seed: u64) -> GibbsConfig {
        GibbsConfig { chains: 10, burn_in: 10_000, samples_per_chain: 100_000, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.samples_per_chain == 0 {
            return Err(Error::Config(
                "need at least one chain and one sample per chain".into(),
            ));
        }
        Ok(())
    }
}

/// P(var = v | every other variable as in `state`) for each value v,
/// normalized. Only the Markov blanket matters: the variable's own CPD leaf
/// and, for each child, the leaf the child reaches when `var` is set to v.
/// `state` is used as scratch and restored before returning.
pub fn markov_blanket_conditional(bn: &BayesNet, var: Var, state: &mut [u8]) -> Vec<f64> {
    let saved = state[var];
    let mut weights = Vec::with_capacity(bn.arity(var));
    for v in 0..bn.arity(var) {
        state[var] = v as u8;
        let mut w = bn.leaf(bn.leaf_for(var, state)).theta[v];
        for &child in bn.children_of(var) {
            w *= bn.leaf(bn.leaf_for(child, state)).theta[state[child] as usize];
        }
        weights.push(w);
    }
    state[var] = saved;
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "smoothed parameters keep every state possible");
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

fn sample_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut u: f64 = rng.random();
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1 // numerical leftovers land on the last value
}

/// Estimates log P(targets | evidence) by Gibbs sampling. Smoothing keeps
/// the estimate inside (0, 1], so the log is always finite.
pub fn gibbs_query(bn: &BayesNet, query: &Query, config: &GibbsConfig) -> Result<f64> {
    config.validate()?;
    query.validate(bn.arities())?;
    let n = bn.num_vars();
    let mut evidence = vec![None::<u8>; n];
    for &(v, val) in &query.evidence {
        evidence[v] = Some(val as u8);
    }
    let mut master = ChaCha12Rng::seed_from_u64(config.seed);
    let chain_seeds: Vec<u64> = (0..config.chains).map(|_| master.next_u64()).collect();

    let hits: u64 = chain_seeds
        .par_iter()
        .map(|&chain_seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(chain_seed);
            let mut state: Vec<u8> = (0..n)
                .map(|v| match evidence[v] {
                    Some(val) => val,
                    None => rng.random_range(0..bn.arity(v)) as u8,
                })
                .collect();
            let mut hits = 0u64;
            for sweep in 0..config.burn_in + config.samples_per_chain {
                for v in 0..n {
                    if evidence[v].is_none() {
                        let weights = markov_blanket_conditional(bn, v, &mut state);
                        state[v] = sample_index(&weights, &mut rng) as u8;
                    }
                }
                if sweep >= config.burn_in
                    && query
                        .targets
                        .iter()
                        .all(|&(v, val)| state[v] == val as u8)
                {
                    hits += 1;
                }
            }
            hits
        })
        .sum();

    let samples = (config.chains * config.samples_per_chain) as f64;
    let target_states: f64 = query
        .targets
        .iter()
        .map(|&(v, _)| bn.arity(v) as f64)
        .product();
    Ok(((hits as f64 + 1.0 / target_states) / (samples + 1.0)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::learn::{learn, LearnConfig};
    use approx::assert_relative_eq;

    fn chain_bn() -> BayesNet {
        // Learn the 2-var chain so the BN has real structure.
        use rand::prelude::*;
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let rows: Vec<Vec<u8>> = (0..4000)
            .map(|_| {
                let x0 = u8::from(rng.random::<f64>() < 0.6);
                let p1 = if x0 == 1 { 0.9 } else { 0.2 };
                vec![x0, u8::from(rng.random::<f64>() < p1)]
            })
            .collect();
        let data = Dataset::new(vec![2, 2], rows).unwrap();
        learn(&data, &LearnConfig::default()).unwrap().bn
    }

    #[test]
    fn blanket_conditional_is_proportional_to_the_joint() {
        let bn = chain_bn();
        let mut state = vec![0u8, 1u8];
        for var in 0..2 {
            let cond = markov_blanket_conditional(&bn, var, &mut state);
            assert_relative_eq!(cond.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            // Compare against P(var=v, rest) normalized.
            let mut joint = Vec::new();
            for v in 0..2u8 {
                let mut row = state.clone();
                row[var] = v;
                joint.push(bn.joint_probability(&row));
            }
            let z: f64 = joint.iter().sum();
            for v in 0..2 {
                assert_relative_eq!(cond[v], joint[v] / z, epsilon = 1e-12);
            }
            assert_eq!(state, vec![0u8, 1u8], "state must be restored");
        }
    }

    #[test]
    fn estimates_the_chain_marginal_within_tolerance() {
        let bn = chain_bn();
        // Exact P(X1=1) under the learned parameters.
        let exact: f64 = (0..2u8)
            .map(|x0| bn.joint_probability(&[x0, 1]))
            .sum();
        let q = Query {
            targets: vec![(1, 1)],
            evidence: vec![],
        };
        let est = gibbs_query(&bn, &q, &GibbsConfig::medium(5)).unwrap().exp();
        assert!(
            (est - exact).abs() <= 0.03,
            "estimate {est} vs exact {exact}"
        );
    }

    #[test]
    fn fully_observed_query_estimates_one() {
        let bn = chain_bn();
        let q = Query {
            targets: vec![],
            evidence: vec![(0, 1), (1, 1)],
        };
        let log_est = gibbs_query(&bn, &q, &GibbsConfig::fast(1)).unwrap();
        assert_eq!(log_est, 0.0, "empty target set always matches");
    }

    #[test]
    fn estimates_are_proper_probabilities_and_deterministic() {
        let bn = chain_bn();
        let q = Query {
            targets: vec![(0, 0)],
            evidence: vec![(1, 0)],
        };
        let a = gibbs_query(&bn, &q, &GibbsConfig::fast(42)).unwrap();
        let b = gibbs_query(&bn, &q, &GibbsConfig::fast(42)).unwrap();
        assert_eq!(a, b, "same seed, same estimate");
        assert!(a.exp() > 0.0 && a.exp() <= 1.0);
        let c = gibbs_query(&bn, &q, &GibbsConfig::fast(43)).unwrap();
        assert_ne!(a, c, "different seed should perturb the estimate");
    }

    #[test]
    fn zero_chains_rejected() {
        let bn = chain_bn();
        let q = Query { targets: vec![(0, 0)], evidence: vec![] };
        let cfg = GibbsConfig { chains: 0, burn_in: 1, samples_per_chain: 1, seed: 0 };
        assert!(gibbs_query(&bn, &q, &cfg).is_err());
    }
}
