//! Per-worker adaptive random-walk Metropolis–Hastings on the subset
//! fiducial density.

mod ess;
mod optimize;

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use ess::effective_sample_size;
pub use optimize::nelder_mead;

use crate::combiner::Particles;
use crate::error::{Error, Result};
use crate::fiducial::{log_fiducial_density, DNorm};
use crate::linalg::{cholesky, spd_inverse, Matrix};
use crate::models::{DataSubset, Model};
use crate::scalar::Scalar;
use crate::seed;

/// Where a chain starts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init<T> {
    /// Subset maximum-likelihood estimate from a Nelder–Mead search started
    /// at the model's moment-based guess.
    #[default]
    Auto,
    At(Vec<T>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig<T> {
    /// Number of retained post-burn-in draws.
    pub samples: usize,
    /// Adaptive phase length; `None` means `samples / 2`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub init: Init<T>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
}

fn one() -> usize {
    1
}

fn default_target_accept() -> f64 {
    0.234
}

pub const MIN_SAMPLES: usize = 100;

impl<T: Scalar> ChainConfig<T> {
    pub fn new(samples: usize, seed: u64) -> Self {
        ChainConfig {
            samples,
            burn_in: None,
            thin: 1,
            init: Init::Auto,
            seed,
            target_accept: default_target_accept(),
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.samples / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::InvalidConfig(format!(
                "chains need at least {MIN_SAMPLES} samples, got {}",
                self.samples
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidConfig("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Draws from one worker's chain, in constrained θ-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput<T> {
    pub subset_id: usize,
    pub particles: Particles<T>,
    /// Unnormalized log fiducial density at each retained draw.
    pub log_density: Vec<T>,
    /// Acceptance rate over the post-burn-in (fixed-kernel) phase.
    pub accept_rate: f64,
    pub burn_in_accept_rate: f64,
    pub ess_per_coord: Vec<T>,
    /// Step index of the last change to the proposal scale or covariance;
    /// always below the burn-in length.
    pub last_adaptation_step: Option<usize>,
    pub burn_in: usize,
    pub thin: usize,
}

impl<T: Scalar> ChainOutput<T> {
    pub fn min_ess(&self) -> T {
        self.ess_per_coord
            .iter()
            .copied()
            .fold(T::infinity(), T::min)
    }

    /// Write `t,theta_1..theta_p,log_density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let p = self.particles.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=p).map(|j| format!("theta_{j}")));
        header.push("log_density".into());
        w.write_record(&header)?;
        for (t, (row, ld)) in self.particles.iter_rows().zip(&self.log_density).enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.push(ld.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Target<'a, T: Scalar, M: Model<T> + ?Sized> {
    model: &'a M,
    subset: &'a DataSubset<T>,
    norm: DNorm,
}

impl<T: Scalar, M: Model<T> + ?Sized> Target<'_, T, M> {
    /// (log target in z-space, log fiducial density in θ-space, θ)
    fn eval(&self, z: &[T]) -> Result<(T, T, Vec<T>)> {
        let (theta, log_jac) = self.model.from_unconstrained(z);
        if !log_jac.is_finite() {
            return Ok((T::neg_infinity(), T::neg_infinity(), theta));
        }
        let lfd = log_fiducial_density(self.model, self.subset, &theta, self.norm)?;
        Ok((lfd + log_jac, lfd, theta))
    }
}

/// Subset maximum-likelihood estimate in unconstrained coordinates.
pub fn subset_mle<T: Scalar, M: Model<T> + ?Sized>(model: &M, subset: &DataSubset<T>) -> Vec<T> {
    let guess = model.initial_guess(&subset.observations);
    let z0 = model.to_unconstrained(&guess);
    let nll = |z: &[T]| {
        let (theta, _) = model.from_unconstrained(z);
        if !model.in_support(&theta) {
            return T::infinity();
        }
        match model.log_likelihood(&subset.observations, &theta) {
            Ok(v) => -v,
            Err(_) => T::infinity(),
        }
    };
    let budget = 400 * (model.dim() + 1);
    let (z1, _) = nelder_mead(&nll, &z0, T::lit(0.2), budget);
    // restart from the best vertex to escape premature simplex collapse
    let (z2, _) = nelder_mead(&nll, &z1, T::lit(0.05), budget);
    z2
}

/// Negative-Hessian based covariance guess at `z`; falls back to a diagonal
/// or a small multiple of the identity.
fn laplace_covariance<T: Scalar>(f: &dyn Fn(&[T]) -> T, z: &[T]) -> Matrix<T> {
    let p = z.len();
    let h = T::lit(1e-3);
    let f0 = f(z);
    let mut hess = Matrix::zeros(p, p);
    let shifted = |i: usize, di: T, j: usize, dj: T| {
        let mut x = z.to_vec();
        x[i] += di;
        x[j] += dj;
        f(&x)
    };
    for i in 0..p {
        let fp = shifted(i, h, i, T::zero());
        let fm = shifted(i, -h, i, T::zero());
        hess[(i, i)] = -(fp - T::lit(2.0) * f0 + fm) / (h * h);
        for j in 0..i {
            let v = -(shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h)
                + shifted(i, -h, j, -h))
                / (T::lit(4.0) * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.as_slice().iter().all(|v| v.is_finite()) {
        if let Some(inv) = spd_inverse(&hess) {
            return inv;
        }
        let mut diag = Matrix::zeros(p, p);
        let mut ok = true;
        for i in 0..p {
            if hess[(i, i)] > T::zero() {
                diag[(i, i)] = T::one() / hess[(i, i)];
            } else {
                ok = false;
            }
        }
        if ok {
            return diag;
        }
    }
    Matrix::identity(p).scaled(T::lit(0.01))
}

/// Running mean and covariance (Welford).
struct RunningCov<T> {
    n: usize,
    mean: Vec<T>,
    m2: Matrix<T>,
}

impl<T: Scalar> RunningCov<T> {
    fn new(p: usize) -> Self {
        RunningCov {
            n: 0,
            mean: vec![T::zero(); p],
            m2: Matrix::zeros(p, p),
        }
    }

    fn push(&mut self, x: &[T]) {
        self.n += 1;
        let nf = T::from_usize_lossy(self.n);
        let p = x.len();
        let delta: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += *d / nf;
        }
        for i in 0..p {
            let di2 = x[i] - self.mean[i];
            for j in 0..p {
                self.m2[(i, j)] += delta[j] * di2;
            }
        }
    }

    fn covariance(&self) -> Matrix<T> {
        let denom = T::from_usize_lossy(self.n.saturating_sub(1).max(1));
        let p = self.mean.len();
        let mut c = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                c[(i, j)] = (self.m2[(i, j)] + self.m2[(j, i)]) / (T::lit(2.0) * denom);
            }
        }
        c
    }
}

const ADAPT_INTERVAL: usize = 25;
const JITTER: f64 = 1e-6;

/// Run one adaptive random-walk Metropolis–Hastings chain on the subset
/// fiducial density.
///
/// During burn-in the proposal covariance tracks `(2.38²/p)·(Σ̂ + 1e-6 I)`
/// with Σ̂ the running covariance of the chain, and a scalar multiplier is
/// tuned toward `target_accept`. After burn-in the kernel is frozen.
pub fn run_chain<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    subset: &DataSubset<T>,
    cfg: &ChainConfig<T>,
    norm: DNorm,
) -> Result<ChainOutput<T>> {
    cfg.validate()?;
    let p = model.dim();
    if subset.is_empty() {
        return Err(Error::InvalidArgument(format!("subset {} is empty", subset.id)));
    }
    model.check_data(&subset.observations)?;
    let target = Target { model, subset, norm };
    let mut rng = seed::rng(cfg.seed);

    let z0 = match &cfg.init {
        Init::At(theta) => {
            if theta.len() != p || !model.in_support(theta) {
                return Err(Error::InitOutsideSupport);
            }
            model.to_unconstrained(theta)
        }
        Init::Auto => subset_mle(model, subset),
    };
    let (mut lp, mut lfd, mut theta) = target.eval(&z0)?;
    let mut z = z0;
    if !lp.is_finite() {
        if matches!(cfg.init, Init::At(_)) {
            return Err(Error::InitOutsideSupport);
        }
        // the likelihood optimum can sit where J vanishes; fall back to the
        // moment-based guess
        let guess = model.initial_guess(&subset.observations);
        z = model.to_unconstrained(&guess);
        (lp, lfd, theta) = target.eval(&z)?;
        if !lp.is_finite() {
            return Err(Error::InitOutsideSupport);
        }
    }

    let neg_target = |x: &[T]| match target.eval(x) {
        Ok((v, _, _)) if v.is_finite() => -v,
        _ => T::infinity(),
    };
    let base_scale = T::lit(2.38 * 2.38 / p as f64);
    let cov = laplace_covariance(&neg_target, &z);
    let mut chol = cholesky(&cov.scaled(base_scale))
        .unwrap_or_else(|| Matrix::identity(p).scaled(T::lit(0.1)));
    let mut log_scale = T::zero();
    let mut last_adaptation_step = None;

    let burn_in = cfg.burn_in();
    let total_post = cfg.samples * cfg.thin;
    let mut running = RunningCov::new(p);
    let mut burn_accepts = 0usize;
    let mut post_accepts = 0usize;
    let mut particles = Particles::with_capacity(p, cfg.samples);
    let mut log_density = Vec::with_capacity(cfg.samples);
    let min_history = (10 * p).max(50);
    let mut noise = vec![T::zero(); p];
    let mut prop = vec![T::zero(); p];

    for step in 0..burn_in + total_post {
        let adapting = step < burn_in;
        for e in noise.iter_mut() {
            *e = T::lit(rng.sample::<f64, _>(StandardNormal));
        }
        let s = log_scale.exp();
        for i in 0..p {
            let mut acc = T::zero();
            for j in 0..=i {
                acc += chol[(i, j)] * noise[j];
            }
            prop[i] = z[i] + s * acc;
        }
        let (lp_new, lfd_new, theta_new) = target.eval(&prop)?;
        let log_ratio = lp_new - lp;
        let accept_prob = if log_ratio >= T::zero() {
            T::one()
        } else if log_ratio.is_finite() {
            log_ratio.exp()
        } else {
            T::zero()
        };
        let u: f64 = rng.random();
        if T::lit(u) < accept_prob {
            z.copy_from_slice(&prop);
            lp = lp_new;
            lfd = lfd_new;
            theta = theta_new;
            if adapting {
                burn_accepts += 1;
            } else {
                post_accepts += 1;
            }
        }

        if adapting {
            running.push(&z);
            let gain = T::lit(((step + 1) as f64).powf(-0.6).min(0.5) * 2.0);
            log_scale += gain * (accept_prob - T::lit(cfg.target_accept));
            log_scale = log_scale.max(T::lit(-10.0)).min(T::lit(5.0));
            last_adaptation_step = Some(step);
            if running.n >= min_history && (step + 1) % ADAPT_INTERVAL == 0 {
                let mut c = running.covariance();
                for i in 0..p {
                    c[(i, i)] += T::lit(JITTER);
                }
                if let Some(l) = cholesky(&c.scaled(base_scale)) {
                    chol = l;
                }
            }
        } else {
            let k = step - burn_in + 1;
            if k % cfg.thin == 0 {
                particles.push(&theta);
                log_density.push(lfd);
            }
        }
    }
    if burn_in > 0 && burn_accepts == 0 {
        return Err(Error::ChainFailedToMix {
            subset: subset.id,
            burn_in,
        });
    }

    let ess_per_coord = (0..p)
        .map(|j| effective_sample_size(&particles.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainOutput {
        subset_id: subset.id,
        particles,
        log_density,
        accept_rate: post_accepts as f64 / total_post.max(1) as f64,
        burn_in_accept_rate: if burn_in == 0 {
            0.0
        } else {
            burn_accepts as f64 / burn_in as f64
        },
        ess_per_coord,
        last_adaptation_step,
        burn_in,
        thin: cfg.thin,
    })
}
