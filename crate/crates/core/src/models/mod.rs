//! Model plugins: log-likelihood, Jacobian rows of the data-generating
//! equation, support transforms and simulators.

mod cauchy_reg;
mod gpd;
mod location;
mod mixture;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use cauchy_reg::{cauchy_reg_jac_row, CauchyRegression};
pub use gpd::{gpd_tail_quantile, GpdTail};
pub use location::{LocationModel, NoiseKind};
pub use mixture::{mixture_jac_row, NormalMixture};

use crate::error::{Error, Result};
use crate::fiducial::{log_d_norm, DNorm};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// One observation: a response and (possibly empty) covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub response: T,
    pub covariates: Vec<T>,
}

impl<T> Observation<T> {
    pub fn scalar(response: T) -> Self {
        Observation {
            response,
            covariates: Vec::new(),
        }
    }

    pub fn with_covariates(response: T, covariates: Vec<T>) -> Self {
        Observation {
            response,
            covariates,
        }
    }
}

/// The block of observations held by one worker, with the positions the
/// observations had in the full dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSubset<T> {
    pub id: usize,
    pub indices: Vec<usize>,
    pub observations: Vec<Observation<T>>,
}

impl<T: Clone> DataSubset<T> {
    /// Wrap a whole dataset as a single subset.
    pub fn whole(observations: Vec<Observation<T>>) -> Self {
        DataSubset {
            id: 0,
            indices: (0..observations.len()).collect(),
            observations,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Concatenate several subsets (used by oracle paths that need the
    /// full data).
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a DataSubset<T>>) -> Self
    where
        T: 'a,
    {
        let mut out = DataSubset {
            id: 0,
            indices: Vec::new(),
            observations: Vec::new(),
        };
        for (i, part) in parts.into_iter().enumerate() {
            if i == 0 {
                out.id = part.id;
            }
            out.indices.extend_from_slice(&part.indices);
            out.observations.extend_from_slice(&part.observations);
        }
        out
    }
}

/// A parametric model Y = G(θ, U) usable for generalized fiducial inference.
///
/// Parameters live in a constrained space (`theta`) and are sampled in an
/// unconstrained space (`z`) through a smooth bijection.
pub trait Model<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension p.
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    /// Number of covariates each observation must carry.
    fn covariate_dim(&self) -> usize {
        0
    }

    /// Data-free support predicate.
    fn in_support(&self, theta: &[T]) -> bool;

    fn to_unconstrained(&self, theta: &[T]) -> Vec<T>;

    /// Map back to θ, returning `log |det dθ/dz|` alongside.
    fn from_unconstrained(&self, z: &[T]) -> (Vec<T>, T);

    /// `log f(y; θ)` summed over `data`; `-inf` when some observation is
    /// impossible under θ.
    fn log_likelihood(&self, data: &[Observation<T>], theta: &[T]) -> Result<T>;

    /// Rows dG/dθ of the data-generating equation; `None` when a row is
    /// rejected (the density of some observation vanishes numerically).
    fn jacobian(&self, data: &[Observation<T>], theta: &[T]) -> Result<Option<Matrix<T>>>;

    /// Additive log-Jacobian contribution not expressed as matrix rows.
    fn log_jacobian_extra(&self, _data: &[Observation<T>], _theta: &[T]) -> T {
        T::zero()
    }

    /// log J(y, θ) under `norm`.
    fn log_jacobian(&self, data: &[Observation<T>], theta: &[T], norm: DNorm) -> Result<T> {
        match self.jacobian(data, theta)? {
            Some(m) => {
                let base = log_d_norm(&m, norm)?;
                Ok(base + self.log_jacobian_extra(data, theta))
            }
            None => Ok(T::neg_infinity()),
        }
    }

    /// `(log f(y; θ), log J(y, θ))` in one call. The Jacobian is skipped
    /// (and reported as `-inf`) when the likelihood is zero. Models
    /// override this to share work between the two terms.
    fn log_likelihood_and_jacobian(
        &self,
        data: &[Observation<T>],
        theta: &[T],
        norm: DNorm,
    ) -> Result<(T, T)> {
        let ll = self.log_likelihood(data, theta)?;
        if ll == T::neg_infinity() {
            return Ok((ll, ll));
        }
        Ok((ll, self.log_jacobian(data, theta, norm)?))
    }

    /// Draw `n` observations at `theta`.
    fn simulate(&self, theta: &[T], n: usize, rng: &mut dyn RngCore) -> Vec<Observation<T>>;

    /// Moment-based starting point for the likelihood search.
    fn initial_guess(&self, data: &[Observation<T>]) -> Vec<T>;

    fn check_data(&self, data: &[Observation<T>]) -> Result<()> {
        let q = self.covariate_dim();
        for (i, o) in data.iter().enumerate() {
            if o.covariates.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "observation {i} has {} covariates, model {} expects {q}",
                    o.covariates.len(),
                    self.name()
                )));
            }
            if !o.response.is_finite() || o.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("observation {i} is not finite")));
            }
        }
        Ok(())
    }
}

/// Serializable model selection used by configs and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    /// Two-component normal mixture with unit variances.
    Mixture,
    /// Linear regression with Cauchy errors and `covariates` slopes.
    CauchyRegression {
        covariates: usize,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    NormalLocation,
    CauchyLocation,
    /// Generalized-Pareto tail above a threshold. When `threshold` is not
    /// given it is set at the `threshold_quantile` empirical quantile of the
    /// pooled data.
    Gpd {
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default = "default_threshold_quantile")]
        threshold_quantile: f64,
    },
}

fn default_rho() -> f64 {
    0.1
}

fn default_threshold_quantile() -> f64 {
    0.99
}

impl ModelConfig {
    /// Parse a CLI model name; `theta_len` disambiguates the regression
    /// dimension.
    pub fn from_name(name: &str, theta_len: Option<usize>) -> Result<Self> {
        match name {
            "mixture" | "normal-mixture" => Ok(ModelConfig::Mixture),
            "cauchy-regression" | "cauchy-reg" => {
                let covariates = match theta_len {
                    Some(l) if l >= 2 => l - 2,
                    Some(_) => return Err(Error::InvalidConfig("cauchy regression needs theta = (b0, b..., sigma)".into())),
                    None => 0,
                };
                Ok(ModelConfig::CauchyRegression {
                    covariates,
                    rho: default_rho(),
                })
            }
            "normal-location" => Ok(ModelConfig::NormalLocation),
            "cauchy-location" => Ok(ModelConfig::CauchyLocation),
            "gpd" | "gpd-tail" => Ok(ModelConfig::Gpd {
                threshold: None,
                threshold_quantile: default_threshold_quantile(),
            }),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelConfig::Mixture | ModelConfig::Gpd { .. } => 3,
            ModelConfig::CauchyRegression { covariates, .. } => covariates + 2,
            ModelConfig::NormalLocation | ModelConfig::CauchyLocation => 1,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        match self {
            ModelConfig::CauchyRegression { covariates, .. } => *covariates,
            _ => 0,
        }
    }

    /// Instantiate the model. `data` is consulted only for data-dependent
    /// settings (the GPD threshold).
    pub fn build<T: Scalar>(&self, data: Option<&[Observation<T>]>) -> Result<Box<dyn Model<T>>> {
        Ok(match self {
            ModelConfig::Mixture => Box::new(NormalMixture),
            ModelConfig::CauchyRegression { covariates, rho } => {
                Box::new(CauchyRegression::new(*covariates, T::lit(*rho))?)
            }
            ModelConfig::NormalLocation => Box::new(LocationModel::new(NoiseKind::Normal)),
            ModelConfig::CauchyLocation => Box::new(LocationModel::new(NoiseKind::Cauchy)),
            ModelConfig::Gpd {
                threshold,
                threshold_quantile,
            } => match (threshold, data) {
                (Some(u), _) => Box::new(GpdTail::new(T::lit(*u))),
                (None, Some(d)) => Box::new(GpdTail::from_data(d, T::lit(*threshold_quantile))?),
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "gpd model needs a threshold or data to place it".into(),
                    ))
                }
            },
        })
    }
}

pub(crate) fn mean_sd<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = T::from_usize_lossy(xs.clone().count().max(1));
    let mean = xs.clone().sum::<T>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Empirical quantile by linear interpolation between order statistics.
pub(crate) fn empirical_quantile<T: Scalar>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * T::from_usize_lossy(n - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = pos - T::from_usize_lossy(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
