use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::worker::{ExchangeLog, Worker};
use super::{normalize_and_ess, Particles, WeightedSample};
use crate::error::{Error, Result};
use crate::fiducial::DNorm;
use crate::models::{DataSubset, Model};
use crate::sampler::ChainOutput;
use crate::scalar::Scalar;

/// Simplified importance log-weight of θ drawn from subset k's fiducial
/// density: Σ_{j≠k} log f(y_j; θ).
pub fn simplified_log_weight<'a, T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    others: impl IntoIterator<Item = &'a DataSubset<T>>,
    theta: &[T],
) -> Result<T> {
    if !model.in_support(theta) {
        return Ok(T::neg_infinity());
    }
    let mut acc = T::zero();
    for s in others {
        acc += model.log_likelihood(&s.observations, theta)?;
    }
    Ok(acc)
}

/// Exact importance log-weight, which also carries the Jacobian ratio
/// J(y, θ) / J(y_k, θ). Needs the full data, so it is an oracle and not a
/// distributed computation.
pub fn exact_log_weight<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    subsets: &[DataSubset<T>],
    k: usize,
    theta: &[T],
    norm: DNorm,
) -> Result<T> {
    let others = subsets.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, s)| s);
    let simple = simplified_log_weight(model, others, theta)?;
    if simple == T::neg_infinity() {
        return Ok(simple);
    }
    let full = DataSubset::concat(subsets.iter());
    let lj_full = model.log_jacobian(&full.observations, theta, norm)?;
    let lj_k = model.log_jacobian(&subsets[k].observations, theta, norm)?;
    if !lj_k.is_finite() {
        return Err(Error::ModelEvaluation(format!(
            "subset {k} Jacobian vanishes at a sampled point"
        )));
    }
    Ok(simple + lj_full - lj_k)
}

/// Weights for one worker's chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectComponent<T> {
    pub subset: usize,
    pub log_weights: Vec<T>,
    pub probabilities: Vec<T>,
    /// Kish ESS of the weights alone.
    pub weight_ess: T,
    /// Weight ESS discounted by the chain's autocorrelation.
    pub ess: f64,
}

/// Result of reweighting every worker's chain by all other blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectOutput<T> {
    pub components: Vec<DirectComponent<T>>,
}

impl<T: Scalar> DirectOutput<T> {
    /// R̃(A): average over workers of the weighted fraction of draws in A.
    pub fn estimate(&self, chains: &[ChainOutput<T>], predicate: impl Fn(&[T]) -> bool) -> T {
        let k = T::from_usize_lossy(self.components.len());
        self.components
            .iter()
            .zip(chains)
            .map(|(c, ch)| {
                ch.particles
                    .iter_rows()
                    .zip(&c.probabilities)
                    .filter(|(r, _)| predicate(r))
                    .map(|(_, &p)| p)
                    .sum::<T>()
            })
            .sum::<T>()
            / k
    }

    /// All draws pooled, each with log-weight log(p_{k,t} / K).
    pub fn pooled_sample(&self, chains: &[ChainOutput<T>]) -> WeightedSample<T> {
        let dim = chains.first().map_or(0, |c| c.particles.dim());
        let total: usize = chains.iter().map(|c| c.particles.len()).sum();
        let mut particles = Particles::with_capacity(dim, total);
        let mut log_weights = Vec::with_capacity(total);
        let ln_k = T::from_usize_lossy(self.components.len()).ln();
        for (c, ch) in self.components.iter().zip(chains) {
            particles.extend(&ch.particles);
            log_weights.extend(c.probabilities.iter().map(|&p| p.ln() - ln_k));
        }
        WeightedSample {
            particles,
            log_weights,
            lineage: self.components.iter().map(|c| c.subset).collect::<BTreeSet<_>>(),
            ess: self.pooled_ess(),
        }
    }

    /// ESS of the average of K independent estimates: K² / Σ 1/ESS_k.
    pub fn pooled_ess(&self) -> f64 {
        let k = self.components.len() as f64;
        let inv: f64 = self.components.iter().map(|c| 1.0 / c.ess).sum();
        k * k / inv
    }
}

fn component<T: Scalar>(chain: &ChainOutput<T>, log_weights: Vec<T>) -> Result<DirectComponent<T>> {
    let (probabilities, weight_ess) =
        normalize_and_ess(&log_weights).map_err(|e| e.in_subset(chain.subset_id))?;
    let n = chain.particles.len().max(1) as f64;
    let chain_frac = (chain.min_ess().as_f64() / n).clamp(0.0, 1.0);
    Ok(DirectComponent {
        subset: chain.subset_id,
        log_weights,
        probabilities,
        weight_ess,
        ess: (weight_ess.as_f64() * chain_frac).max(1.0),
    })
}

fn check_chains<T: Scalar>(n_workers: usize, chains: &[ChainOutput<T>]) -> Result<()> {
    if chains.len() != n_workers || chains.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} chains for {n_workers} workers",
            chains.len()
        )));
    }
    Ok(())
}

/// Direct combination with simplified weights. Every chain is broadcast to
/// every other worker, which returns log-likelihoods of its own block.
pub fn run_algorithm1<T: Scalar, M: Model<T> + ?Sized>(
    workers: &[Worker<'_, T, M>],
    chains: &[ChainOutput<T>],
    log: &ExchangeLog,
) -> Result<DirectOutput<T>> {
    check_chains(workers.len(), chains)?;
    let components = chains
        .par_iter()
        .enumerate()
        .map(|(k, chain)| {
            let mut lw = vec![T::zero(); chain.particles.len()];
            for (j, w) in workers.iter().enumerate() {
                if j == k {
                    continue;
                }
                let ll = w.log_likelihoods(&chain.particles, log)?;
                for (a, b) in lw.iter_mut().zip(ll) {
                    *a += b;
                }
            }
            component(chain, lw)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DirectOutput { components })
}

/// Direct combination with exact weights (oracle path; uses the full data).
pub fn run_algorithm1_exact<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    subsets: &[DataSubset<T>],
    chains: &[ChainOutput<T>],
    norm: DNorm,
) -> Result<DirectOutput<T>> {
    check_chains(subsets.len(), chains)?;
    let components = chains
        .par_iter()
        .enumerate()
        .map(|(k, chain)| {
            let lw = chain
                .particles
                .iter_rows()
                .map(|theta| exact_log_weight(model, subsets, k, theta, norm))
                .collect::<Result<Vec<_>>>()?;
            component(chain, lw)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DirectOutput { components })
}
