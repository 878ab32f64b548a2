use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{combine, Algorithm, FitConfig};
use crate::error::{Error, Result};
use crate::fiducial::DNorm;
use crate::inference::marginal_cdf;
use crate::models::ModelConfig;
use crate::seed::{self, Role};

fn default_alphas() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

fn one() -> usize {
    1
}

/// Repeated simulate-and-fit experiment measuring one-sided interval
/// coverage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// True parameter used to simulate every replication.
    pub theta: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub t: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub norm: DNorm,
    #[serde(default)]
    pub concurrency: Option<usize>,
    /// Coordinates to report; all when absent.
    #[serde(default)]
    pub parameters: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.model.dim();
        if self.theta.len() != p {
            return Err(Error::InvalidConfig(format!(
                "theta has {} entries, the model has {p} parameters",
                self.theta.len()
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidConfig("alphas must be a nonempty subset of (0, 1)".into()));
        }
        if let Some(ps) = &self.parameters {
            if ps.iter().any(|&j| j >= p) {
                return Err(Error::InvalidConfig(format!("parameter index out of range 0..{p}")));
            }
        }
        let model = self.model.build::<f64>(None).or_else(|_| {
            // data-dependent models can only be checked for support later
            ModelConfig::NormalLocation.build::<f64>(None)
        })?;
        if model.dim() == p && !model.in_support(&self.theta) {
            return Err(Error::InvalidConfig("theta lies outside the model support".into()));
        }
        self.fit_config(0).validate(self.n)
    }

    fn fit_config(&self, replication: usize) -> FitConfig {
        FitConfig {
            model: self.model.clone(),
            k: self.k,
            t: self.t,
            burn_in: self.burn_in,
            algorithm: self.algorithm,
            norm: self.norm,
            seed: seed::derive(self.seed, Role::Replication, &[replication as u64]),
            concurrency: None,
        }
    }

    fn reported(&self) -> Vec<usize> {
        self.parameters
            .clone()
            .unwrap_or_else(|| (0..self.model.dim()).collect())
    }
}

/// α ± 1.96·√(α(1−α)/M).
pub fn coverage_band(alpha: f64, m: usize) -> (f64, f64) {
    let half = 1.96 * (alpha * (1.0 - alpha) / m as f64).sqrt();
    (alpha - half, alpha + half)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub parameter: String,
    pub alpha: f64,
    pub coverage: f64,
    pub band_lower: f64,
    pub band_upper: f64,
    pub in_band: bool,
    /// Successful replications the coverage is computed from.
    pub replications: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub failures: usize,
    pub total: usize,
    /// False when more than 5% of replications failed.
    pub valid: bool,
    /// Wall-clock seconds per replication (NaN for failures); excluded
    /// from the CSV so reports are reproducible.
    #[serde(skip)]
    pub replication_seconds: Vec<f64>,
    #[serde(skip)]
    pub failure_messages: Vec<(usize, String)>,
}

impl CoverageReport {
    /// Fraction of rows in band, optionally restricted to some parameters.
    pub fn in_band_fraction(&self, parameters: Option<&[&str]>) -> f64 {
        let rows: Vec<&CoverageRow> = self
            .rows
            .iter()
            .filter(|r| parameters.is_none_or(|ps| ps.contains(&r.parameter.as_str())))
            .collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().filter(|r| r.in_band).count() as f64 / rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Error when the experiment is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        if self.valid {
            Ok(())
        } else {
            Err(Error::ExperimentInvalid {
                failed: self.failures,
                total: self.total,
            })
        }
    }
}

/// Per replication: simulate n observations at the true θ, fit, and check
/// whether θ_j ≤ R_j⁻¹(α) for each reported coordinate and α. Failed
/// replications are excluded and counted.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    if cfg.replications < 30 {
        log::warn!("coverage band is not meaningful with {} replications", cfg.replications);
    }
    let coords = cfg.reported();
    let run = |r: usize| -> (Result<Vec<Vec<bool>>>, f64) {
        let start = Instant::now();
        let res = (|| {
            let generator = cfg.model.build::<f64>(None).ok();
            let data = {
                let mut rng = seed::derived_rng(cfg.seed, Role::Simulate, &[r as u64]);
                match &generator {
                    Some(m) => m.simulate(&cfg.theta, cfg.n, &mut rng),
                    None => {
                        // threshold depends on the data; any threshold
                        // simulates the same distribution
                        let m = ModelConfig::Gpd {
                            threshold: Some(0.0),
                            threshold_quantile: 0.99,
                        }
                        .build::<f64>(None)?;
                        m.simulate(&cfg.theta, cfg.n, &mut rng)
                    }
                }
            };
            let model = cfg.model.build::<f64>(Some(&data))?;
            let c = combine(model.as_ref(), &data, &cfg.fit_config(r))?;
            coords
                .iter()
                .map(|&j| {
                    let cdf = marginal_cdf(&c.sample, j)?;
                    Ok(cfg.alphas.iter().map(|&a| cfg.theta[j] <= cdf.quantile(a)).collect())
                })
                .collect::<Result<Vec<Vec<bool>>>>()
        })();
        (res, start.elapsed().as_secs_f64())
    };
    let results: Vec<(Result<Vec<Vec<bool>>>, f64)> = super::with_pool(cfg.concurrency, || {
        (0..cfg.replications).into_par_iter().map(run).collect()
    })?;

    let mut failure_messages = Vec::new();
    let mut hits = vec![vec![0usize; cfg.alphas.len()]; coords.len()];
    let mut ok = 0usize;
    let mut seconds = Vec::with_capacity(results.len());
    for (r, (res, secs)) in results.into_iter().enumerate() {
        match res {
            Ok(ind) => {
                ok += 1;
                seconds.push(secs);
                for (h, i) in hits.iter_mut().zip(ind) {
                    for (a, b) in h.iter_mut().zip(i) {
                        *a += usize::from(b);
                    }
                }
            }
            Err(e) => {
                log::warn!("replication {r} failed: {e}");
                seconds.push(f64::NAN);
                failure_messages.push((r, e.to_string()));
            }
        }
    }
    let failures = failure_messages.len();
    let names = cfg
        .model
        .build::<f64>(None)
        .map(|m| m.param_names())
        .unwrap_or_else(|_| vec!["sigma".into(), "xi".into(), "zeta".into()]);
    let mut rows = Vec::new();
    for (ci, &j) in coords.iter().enumerate() {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let (lo, hi) = coverage_band(alpha, cfg.replications);
            let coverage = if ok == 0 { f64::NAN } else { hits[ci][ai] as f64 / ok as f64 };
            rows.push(CoverageRow {
                parameter: names[j].clone(),
                alpha,
                coverage,
                band_lower: lo,
                band_upper: hi,
                in_band: coverage >= lo && coverage <= hi,
                replications: ok,
                failures,
            });
        }
    }
    Ok(CoverageReport {
        rows,
        failures,
        total: cfg.replications,
        valid: failures as f64 <= 0.05 * cfg.replications as f64,
        replication_seconds: seconds,
        failure_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_arithmetic() {
        let (lo, hi) = coverage_band(0.95, 100);
        assert!((lo - 0.9073).abs() < 5e-5 && (hi - 0.9927).abs() < 5e-5);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig {
            model: ModelConfig::NormalLocation,
            theta: vec![0.0],
            n: 40,
            k: 2,
            t: 200,
            burn_in: None,
            replications: 3,
            alphas: default_alphas(),
            seed: 1,
            algorithm: Algorithm::MethodG,
            norm: DNorm::D2,
            concurrency: None,
            parameters: None,
        };
        cfg.validate().unwrap();
        cfg.theta = vec![0.0, 1.0];
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        cfg.theta = vec![0.0];
        cfg.alphas = vec![1.0];
        assert!(cfg.validate().is_err());
        cfg.alphas = vec![0.5];
        cfg.n = 3;
        assert!(cfg.validate().is_err());
    }
}
