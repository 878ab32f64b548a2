//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use gfi_core::combiner::{ExchangeLog, Worker};
use gfi_core::harness::partition;
use gfi_core::models::{Model, Observation};
use gfi_core::sampler::{ChainConfig, ChainOutput};
use gfi_core::seed::{self, Role};
use gfi_core::DNorm;
use num_bigint::BigUint;

/// Fiducial CDF of a one-parameter density tabulated on a uniform grid and
/// integrated with the trapezoid rule.
pub struct GridCdf {
    pub grid: Vec<f64>,
    pub cum: Vec<f64>,
}

impl GridCdf {
    /// Tabulate `exp(log_density)` on `[lo, hi]` with `points` nodes.
    pub fn new(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Self {
        let h = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
        let logs: Vec<f64> = grid.iter().map(|&t| log_density(t)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let mut cum = vec![0.0; points];
        for i in 1..points {
            cum[i] = cum[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
        }
        let total = cum[points - 1];
        cum.iter_mut().for_each(|c| *c /= total);
        GridCdf { grid, cum }
    }

    /// R(t) by linear interpolation of the cumulative table.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.grid[0] {
            return 0.0;
        }
        let last = self.grid.len() - 1;
        if t >= self.grid[last] {
            return 1.0;
        }
        let h = self.grid[1] - self.grid[0];
        let i = (((t - self.grid[0]) / h) as usize).min(last - 1);
        let f = (t - self.grid[i]) / h;
        self.cum[i] + f * (self.cum[i + 1] - self.cum[i])
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c < q).clamp(1, self.grid.len() - 1);
        let (c0, c1) = (self.cum[i - 1], self.cum[i]);
        let f = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
        self.grid[i - 1] + f * (self.grid[i] - self.grid[i - 1])
    }
}

/// Full-data fiducial CDF of the unit-variance normal location model.
/// Every Jacobian row is 1, so the density is the likelihood.
pub fn normal_location_oracle(data: &[Observation<f64>]) -> GridCdf {
    let ys: Vec<f64> = data.iter().map(|o| o.response).collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let half = 10.0 / n.sqrt();
    GridCdf::new(
        |mu| -0.5 * ys.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>(),
        mean - half,
        mean + half,
        40_001,
    )
}

/// Normalized probabilities and Kish ESS of integer weights, computed in
/// exact integer arithmetic: p_t = w_t / S and ESS = S² / Σ w_t².
pub fn exact_normalization(weights: &[u32]) -> (Vec<f64>, f64) {
    let s: BigUint = weights.iter().map(|&w| BigUint::from(w)).sum();
    let s2: BigUint = weights.iter().map(|&w| BigUint::from(w) * BigUint::from(w)).sum();
    let probs = weights.iter().map(|&w| ratio(&BigUint::from(w), &s)).collect();
    (probs, ratio(&(&s * &s), &s2))
}

/// a / b to double precision through a 2¹²⁸-scaled integer quotient.
fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    let q: BigUint = (a << 128u32) / b;
    let v = q
        .to_u64_digits()
        .iter()
        .rev()
        .fold(0.0_f64, |acc, &d| acc * 2f64.powi(64) + d as f64);
    v * 2f64.powi(-128)
}

/// One worker per subset of a random partition.
pub fn workers<'m, M: Model<f64> + ?Sized>(
    model: &'m M,
    data: &[Observation<f64>],
    k: usize,
    master: u64,
) -> Vec<Worker<'m, f64, M>> {
    partition(data, k, master)
        .expect("partition")
        .into_iter()
        .map(|s| Worker::new(model, s))
        .collect()
}

/// Run every worker's chain with seeds derived from `master`.
pub fn chains<M: Model<f64> + ?Sized>(
    workers: &[Worker<'_, f64, M>],
    t: usize,
    master: u64,
    log: &ExchangeLog,
) -> Vec<ChainOutput<f64>> {
    workers
        .iter()
        .map(|w| {
            let cfg = ChainConfig::new(t, seed::derive(master, Role::Chain, &[w.id() as u64]));
            w.sample(&cfg, DNorm::D2, log).expect("chain")
        })
        .collect()
}
