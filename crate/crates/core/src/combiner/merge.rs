use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::resample::resample;
use super::worker::{ExchangeLog, Worker};
use super::{normalize_and_ess, Particles, WeightedSample};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::sampler::ChainOutput;
use crate::scalar::{log_sum_exp, Scalar};
use crate::seed::{self, Role};

/// Pairings per round. A merged group is identified by the smallest
/// subset id it contains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePlan {
    pub rounds: Vec<Vec<(usize, usize)>>,
}

impl MergePlan {
    /// Balanced binary tree over ids `0..k`: adjacent groups are paired in
    /// ascending order and an odd one out passes to the next round.
    pub fn binary_tree(k: usize) -> Self {
        let mut live: Vec<usize> = (0..k).collect();
        let mut rounds = Vec::new();
        while live.len() > 1 {
            let pairs: Vec<(usize, usize)> = live.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            let mut next: Vec<usize> = pairs.iter().map(|&(a, _)| a).collect();
            if live.len() % 2 == 1 {
                next.push(*live.last().unwrap());
            }
            rounds.push(pairs);
            live = next;
        }
        MergePlan { rounds }
    }

    /// Check that the plan merges groups `0..k` into one.
    pub fn validate(&self, k: usize) -> Result<()> {
        let mut live: BTreeSet<usize> = (0..k).collect();
        for (r, pairs) in self.rounds.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &(a, b) in pairs {
                if a == b || !live.contains(&a) || !live.contains(&b) || !seen.insert(a) || !seen.insert(b) {
                    return Err(Error::InvalidConfig(format!(
                        "merge plan round {r}: pair ({a}, {b}) is not a pair of distinct live groups"
                    )));
                }
                live.remove(&a.max(b));
            }
        }
        if live.len() != 1 {
            return Err(Error::InvalidConfig(format!(
                "merge plan leaves {} groups unmerged",
                live.len()
            )));
        }
        Ok(())
    }
}

/// One pairwise merge, written as a JSON line to the merge trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub round: usize,
    pub left: usize,
    pub right: usize,
    pub ess_left: f64,
    pub ess_right: f64,
    pub log_sum_weight_left: f64,
    pub log_sum_weight_right: f64,
    pub drawn_left: usize,
    pub drawn_right: usize,
}

pub fn write_trace<W: Write>(records: &[MergeRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct MethodGOutput<T> {
    pub sample: WeightedSample<T>,
    pub trace: Vec<MergeRecord>,
}

impl<T> MethodGOutput<T> {
    /// Smallest per-side weight ESS across all merges.
    pub fn min_merge_ess(&self) -> Option<f64> {
        self.trace
            .iter()
            .map(|r| r.ess_left.min(r.ess_right))
            .reduce(f64::min)
    }
}

struct Group<T> {
    members: Vec<usize>,
    sample: WeightedSample<T>,
}

fn cross_log_lik<T: Scalar, M: Model<T> + ?Sized>(
    workers: &BTreeMap<usize, &Worker<'_, T, M>>,
    members: &[usize],
    particles: &Particles<T>,
    log: &ExchangeLog,
) -> Result<Vec<T>> {
    let mut acc = vec![T::zero(); particles.len()];
    for id in members {
        let ll = workers[id].log_likelihoods(particles, log)?;
        for (a, b) in acc.iter_mut().zip(ll) {
            *a += b;
        }
    }
    Ok(acc)
}

/// Resample one side of a merge. Returns the draws, Kish ESS and
/// log-sum-weight.
fn side<T: Scalar>(
    lw: &[T],
    particles: &Particles<T>,
    m: usize,
    seed: u64,
) -> Result<Option<(Particles<T>, T, T)>> {
    let (probs, ess) = match normalize_and_ess(lw) {
        Ok(v) => v,
        Err(Error::WeightDegeneracy(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let drawn = if m == 0 {
        Particles::with_capacity(particles.dim(), 0)
    } else {
        resample(particles, &probs, m, &mut seed::rng(seed))?
    };
    Ok(Some((drawn, ess, log_sum_exp(lw))))
}

fn merge_pair<T: Scalar, M: Model<T> + ?Sized>(
    workers: &BTreeMap<usize, &Worker<'_, T, M>>,
    left: Group<T>,
    right: Group<T>,
    round: usize,
    master_seed: u64,
    log: &ExchangeLog,
) -> Result<(Group<T>, MergeRecord)> {
    let (l_id, r_id) = (left.members[0], right.members[0]);
    // each side is weighted by the other group's likelihood
    let lw_left = cross_log_lik(workers, &right.members, &left.sample.particles, log)?;
    let lw_right = cross_log_lik(workers, &left.members, &right.sample.particles, log)?;
    let total = left.sample.len();
    let (m_left, m_right) = (total.div_ceil(2), total / 2);
    let path = [round as u64, l_id as u64, r_id as u64];
    let seed_l = seed::derive(master_seed, Role::Merge, &[path[0], path[1], path[2], 0]);
    let seed_r = seed::derive(master_seed, Role::Merge, &[path[0], path[1], path[2], 1]);
    let a = side(&lw_left, &left.sample.particles, m_left, seed_l)?;
    let b = side(&lw_right, &right.sample.particles, m_right, seed_r)?;
    let (Some((pl, ess_l, lse_l)), Some((pr, ess_r, lse_r))) = (a.as_ref(), b.as_ref()) else {
        return Err(Error::MergeDegeneracy {
            round,
            left: l_id,
            right: r_id,
            ess_left: a.as_ref().map_or(0.0, |s| s.1.as_f64()),
            ess_right: b.as_ref().map_or(0.0, |s| s.1.as_f64()),
        });
    };
    let carried = |g: &Group<T>, kish: T, m: usize| {
        let frac = (g.sample.ess / g.sample.len().max(1) as f64).clamp(0.0, 1.0);
        (kish.as_f64() * frac).min(m as f64)
    };
    let ess = carried(&left, *ess_l, m_left) + carried(&right, *ess_r, m_right);
    let mut particles = pl.clone();
    particles.extend(pr);
    let mut members = left.members;
    members.extend(right.members);
    members.sort_unstable();
    let lineage = left.sample.lineage.union(&right.sample.lineage).copied().collect();
    let record = MergeRecord {
        round,
        left: l_id,
        right: r_id,
        ess_left: ess_l.as_f64(),
        ess_right: ess_r.as_f64(),
        log_sum_weight_left: lse_l.as_f64(),
        log_sum_weight_right: lse_r.as_f64(),
        drawn_left: m_left,
        drawn_right: m_right,
    };
    Ok((
        Group {
            members,
            sample: WeightedSample::uniform(particles, lineage, ess.max(1.0)),
        },
        record,
    ))
}

/// Pairwise resample-and-merge combination. Pairs within a round run in
/// parallel; each merge draws from its own seed stream, so the result does
/// not depend on scheduling.
pub fn run_method_g<T: Scalar, M: Model<T> + ?Sized>(
    workers: &[Worker<'_, T, M>],
    chains: Vec<ChainOutput<T>>,
    plan: &MergePlan,
    master_seed: u64,
    log: &ExchangeLog,
) -> Result<MethodGOutput<T>> {
    let k = workers.len();
    if chains.len() != k || k == 0 {
        return Err(Error::DimensionMismatch(format!("{} chains for {k} workers", chains.len())));
    }
    plan.validate(k)?;
    let by_id: BTreeMap<usize, &Worker<'_, T, M>> = workers.iter().map(|w| (w.id(), w)).collect();
    if by_id.keys().copied().ne(0..k) {
        return Err(Error::InvalidArgument("worker ids must be 0..K".into()));
    }
    let mut live: BTreeMap<usize, Group<T>> = BTreeMap::new();
    for c in chains {
        let id = c.subset_id;
        let ess = c.min_ess().as_f64();
        live.insert(
            id,
            Group {
                members: vec![id],
                sample: WeightedSample::uniform(c.particles, BTreeSet::from([id]), ess),
            },
        );
    }
    if live.len() != k {
        return Err(Error::InvalidArgument("chain subset ids must be distinct".into()));
    }
    let mut trace = Vec::new();
    for (round, pairs) in plan.rounds.iter().enumerate() {
        let work: Vec<(Group<T>, Group<T>)> = pairs
            .iter()
            .map(|&(a, b)| {
                let (lo, hi) = (a.min(b), a.max(b));
                (live.remove(&lo).unwrap(), live.remove(&hi).unwrap())
            })
            .collect();
        let merged = work
            .into_par_iter()
            .map(|(l, r)| merge_pair(&by_id, l, r, round, master_seed, log))
            .collect::<Result<Vec<_>>>()?;
        for (g, rec) in merged {
            trace.push(rec);
            live.insert(g.members[0], g);
        }
    }
    let (_, last) = live.pop_first().expect("plan validated to leave one group");
    Ok(MethodGOutput {
        sample: last.sample,
        trace,
    })
}
