//! End-to-end orchestration: data files, partitioning, the fit pipeline,
//! coverage experiments and timing sweeps.

mod coverage;
mod timing;

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use coverage::{coverage_band, coverage_experiment, CoverageReport, CoverageRow, ExperimentConfig};
pub use timing::{timing_experiment, write_timings, TimingConfig, TimingRow};

use crate::combiner::{
    run_algorithm1, run_method_g, ExchangeLog, MergePlan, MergeRecord, WeightedSample, Worker,
};
use crate::error::{Error, Result};
use crate::fiducial::DNorm;
use crate::inference::{FiducialSummary, DEFAULT_CI};
use crate::models::{DataSubset, Model, ModelConfig, Observation};
use crate::sampler::{ChainConfig, ChainOutput, Init};
use crate::seed::{self, Role};

/// Read observations from CSV with header `y,x1,...,xq`.
pub fn read_data<R: Read>(input: R) -> Result<Vec<Observation<f64>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("y") {
        return Err(Error::InvalidConfig("data CSV must start with a 'y' column".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("row {}: '{f}': {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Observation::with_covariates(vals[0], vals[1..].to_vec()));
    }
    Ok(out)
}

pub fn read_data_file(path: &Path) -> Result<Vec<Observation<f64>>> {
    read_data(std::fs::File::open(path)?)
}

pub fn write_data<W: Write>(data: &[Observation<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let q = data.first().map_or(0, |o| o.covariates.len());
    let mut header = vec!["y".to_string()];
    header.extend((1..=q).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for o in data {
        let mut rec = vec![o.response.to_string()];
        rec.extend(o.covariates.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Random shuffle followed by a contiguous split into `k` blocks whose
/// sizes differ by at most one (larger blocks first).
pub fn partition<T: Clone>(data: &[Observation<T>], k: usize, master_seed: u64) -> Result<Vec<DataSubset<T>>> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("cannot split {n} observations into {k} subsets")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if k > 1 {
        order.shuffle(&mut seed::derived_rng(master_seed, Role::Partition, &[]));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|id| {
            let len = base + usize::from(id < extra);
            let indices = order[start..start + len].to_vec();
            start += len;
            DataSubset {
                id,
                observations: indices.iter().map(|&i| data[i].clone()).collect(),
                indices,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Every chain reweighted by all other blocks' likelihoods.
    Direct,
    /// Pairwise resample-and-merge tree.
    #[default]
    MethodG,
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Algorithm::Direct),
            "method-g" | "method_g" => Ok(Algorithm::MethodG),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Direct => "direct",
            Algorithm::MethodG => "method_g",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub k: usize,
    /// Retained draws per chain.
    pub t: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub norm: DNorm,
    #[serde(default)]
    pub seed: u64,
    /// Maximum number of chains or merges running at once; `None` uses
    /// every available core.
    #[serde(default)]
    pub concurrency: Option<usize>,
}

impl FitConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let p = self.model.dim();
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if n < self.k * (p + 1) {
            return Err(Error::InvalidConfig(format!(
                "n = {n} observations is too few for k = {} subsets of a {p}-parameter model",
                self.k
            )));
        }
        if self.concurrency == Some(0) {
            return Err(Error::InvalidConfig("concurrency must be positive".into()));
        }
        self.chain_config(0).validate()
    }

    fn chain_config(&self, subset: usize) -> ChainConfig<f64> {
        ChainConfig {
            samples: self.t,
            burn_in: self.burn_in,
            thin: 1,
            init: Init::Auto,
            seed: seed::derive(self.seed, Role::Chain, &[subset as u64]),
            target_accept: 0.234,
        }
    }
}

/// Wall-clock seconds per phase. Never part of the deterministic output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub sampling: f64,
    pub weighting: f64,
    pub merging: f64,
    pub total: f64,
}

/// Deterministic fit output written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub algorithm: Algorithm,
    pub norm: DNorm,
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub seed: u64,
    /// Approximate effective size of the final sample.
    pub ess: f64,
    /// Per-chain post-burn-in acceptance rates.
    pub accept_rates: Vec<f64>,
    /// Per-worker weight ESS (direct) or smallest per-merge ESS (merge tree).
    pub combine_ess: Vec<f64>,
    pub coordinates: Vec<FiducialSummary>,
}

impl FitSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub struct PipelineOutput {
    pub sample: WeightedSample<f64>,
    pub summary: FitSummary,
    pub chains: Vec<ChainOutput<f64>>,
    pub trace: Vec<MergeRecord>,
    pub timings: Timings,
}

fn with_pool<R: Send>(limit: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match limit {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// The combined sample plus combination diagnostics, without summaries.
pub(crate) struct Combined {
    pub sample: WeightedSample<f64>,
    pub chains: Vec<ChainOutput<f64>>,
    pub trace: Vec<MergeRecord>,
    pub combine_ess: Vec<f64>,
    pub timings: Timings,
}

pub(crate) fn combine(model: &dyn Model<f64>, data: &[Observation<f64>], cfg: &FitConfig) -> Result<Combined> {
    use rayon::prelude::*;

    cfg.validate(data.len())?;
    model.check_data(data)?;
    let start = Instant::now();
    let subsets = partition(data, cfg.k, cfg.seed)?;
    let workers: Vec<Worker<'_, f64, dyn Model<f64>>> =
        subsets.into_iter().map(|s| Worker::new(model, s)).collect();
    let log = ExchangeLog::new();

    with_pool(cfg.concurrency, || {
        let t0 = Instant::now();
        let chains = workers
            .par_iter()
            .map(|w| w.sample(&cfg.chain_config(w.id()), cfg.norm, &log))
            .collect::<Result<Vec<_>>>()?;
        let mut timings = Timings {
            sampling: t0.elapsed().as_secs_f64(),
            ..Timings::default()
        };
        let t1 = Instant::now();
        let (sample, trace, combine_ess) = match cfg.algorithm {
            Algorithm::Direct => {
                let out = run_algorithm1(&workers, &chains, &log)?;
                timings.weighting = t1.elapsed().as_secs_f64();
                let ess = out.components.iter().map(|c| c.ess).collect();
                (out.pooled_sample(&chains), Vec::new(), ess)
            }
            Algorithm::MethodG => {
                let plan = MergePlan::binary_tree(cfg.k);
                let out = run_method_g(&workers, chains.clone(), &plan, cfg.seed, &log)?;
                timings.merging = t1.elapsed().as_secs_f64();
                let ess = out.min_merge_ess().into_iter().collect();
                (out.sample, out.trace, ess)
            }
        };
        timings.total = start.elapsed().as_secs_f64();
        Ok(Combined {
            sample,
            chains,
            trace,
            combine_ess,
            timings,
        })
    })?
}

/// Partition, sample every block, combine, and summarize.
pub fn run_pipeline(data: &[Observation<f64>], cfg: &FitConfig) -> Result<PipelineOutput> {
    let model = cfg.model.build::<f64>(Some(data))?;
    let c = combine(model.as_ref(), data, cfg)?;
    let names = model.param_names();
    let coordinates = (0..model.dim())
        .map(|j| FiducialSummary::from_sample(&c.sample, j, &names[j], &DEFAULT_CI))
        .collect::<Result<Vec<_>>>()?;
    let summary = FitSummary {
        model: model.name().to_string(),
        algorithm: cfg.algorithm,
        norm: cfg.norm,
        n: data.len(),
        k: cfg.k,
        t: cfg.t,
        seed: cfg.seed,
        ess: c.sample.ess,
        accept_rates: c.chains.iter().map(|ch| ch.accept_rate).collect(),
        combine_ess: c.combine_ess,
        coordinates,
    };
    Ok(PipelineOutput {
        sample: c.sample,
        summary,
        chains: c.chains,
        trace: c.trace,
        timings: c.timings,
    })
}
