//! Distributed generalized fiducial inference.
//!
//! Data are split across workers; each worker samples the fiducial density
//! of its own block with adaptive random-walk Metropolis–Hastings, and the
//! worker samples are combined by importance weighting with the other
//! blocks' likelihoods, either directly (every worker sample reweighted by
//! all other blocks) or through a pairwise resample-and-merge tree. The
//! final sample feeds interval estimates, confidence curves and kernel
//! density estimates.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! harness and the command-line tool use.

pub mod combiner;
pub mod error;
pub mod fiducial;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod sampler;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use fiducial::{d2, d_inf, log_fiducial_density, DNorm};
pub use scalar::Scalar;

/// A point θ in parameter space.
pub type ParamVector = Vec<f64>;
pub type Observation = models::Observation<f64>;
pub type DataSubset = models::DataSubset<f64>;
pub type JacobianMatrix = linalg::Matrix<f64>;
pub type Particles = combiner::Particles<f64>;
pub type ChainOutput = sampler::ChainOutput<f64>;
pub type ChainConfig = sampler::ChainConfig<f64>;
pub type LogWeightVector = combiner::LogWeightVector<f64>;
pub type WeightedSample = combiner::WeightedSample<f64>;
pub type FiducialSummary = inference::FiducialSummary;
pub type StepCdf = inference::StepCdf<f64>;

/// Single-precision counterparts of the aliases above.
pub mod f32 {
    pub type JacobianMatrix = crate::linalg::Matrix<f32>;
    pub type Particles = crate::combiner::Particles<f32>;
    pub type WeightedSample = crate::combiner::WeightedSample<f32>;
    pub type StepCdf = crate::inference::StepCdf<f32>;
}
