use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{combine, Algorithm, FitConfig};
use crate::error::{Error, Result};
use crate::fiducial::DNorm;
use crate::models::ModelConfig;
use crate::seed::{self, Role};

/// Wall-clock sweep over the number of workers on one simulated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub model: ModelConfig,
    pub theta: Vec<f64>,
    pub n: usize,
    pub ks: Vec<usize>,
    pub t: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub norm: DNorm,
    #[serde(default)]
    pub concurrency: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub k: usize,
    pub sampling: f64,
    pub weighting: f64,
    pub merging: f64,
    pub total: f64,
}

/// One row per entry of `ks`. Total time trades per-worker sampling cost
/// against combination cost, so it need not fall monotonically in K.
pub fn timing_experiment(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    let mut distinct = cfg.ks.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidConfig("≥2 values of K required".into()));
    }
    if cfg.theta.len() != cfg.model.dim() {
        return Err(Error::InvalidConfig("theta length does not match the model".into()));
    }
    let generator = match cfg.model.build::<f64>(None) {
        Ok(m) => m,
        Err(_) => ModelConfig::Gpd {
            threshold: Some(0.0),
            threshold_quantile: 0.99,
        }
        .build::<f64>(None)?,
    };
    if !generator.in_support(&cfg.theta) {
        return Err(Error::InvalidConfig("theta lies outside the model support".into()));
    }
    let data = generator.simulate(&cfg.theta, cfg.n, &mut seed::derived_rng(cfg.seed, Role::Simulate, &[]));
    let model = cfg.model.build::<f64>(Some(&data))?;
    cfg.ks
        .iter()
        .map(|&k| {
            let fit = FitConfig {
                model: cfg.model.clone(),
                k,
                t: cfg.t,
                burn_in: cfg.burn_in,
                algorithm: cfg.algorithm,
                norm: cfg.norm,
                seed: cfg.seed,
                concurrency: cfg.concurrency,
            };
            let c = combine(model.as_ref(), &data, &fit)?;
            Ok(TimingRow {
                k,
                sampling: c.timings.sampling,
                weighting: c.timings.weighting,
                merging: c.timings.merging,
                total: c.timings.total,
            })
        })
        .collect()
}

pub fn write_timings<W: Write>(rows: &[TimingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
