use rand::{Rng, RngCore};
use rand_distr::{Cauchy, StandardNormal};

use super::{Model, Observation};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, Matrix};
use crate::scalar::Scalar;

/// `Y = β0 + xᵀβ + σW` with W standard Cauchy; θ = (β0, β1..βq, σ).
///
/// Covariates are simulated as equicorrelated standard normals with
/// pairwise correlation `rho`.
#[derive(Clone, Debug)]
pub struct CauchyRegression<T> {
    covariates: usize,
    rho: T,
}

impl<T: Scalar> CauchyRegression<T> {
    pub fn new(covariates: usize, rho: T) -> Result<Self> {
        if !(rho >= T::zero() && rho < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "covariate correlation must lie in [0, 1), got {rho}"
            )));
        }
        Ok(CauchyRegression { covariates, rho })
    }

    #[inline]
    fn residual(&self, obs: &Observation<T>, theta: &[T]) -> T {
        let fit = obs
            .covariates
            .iter()
            .zip(&theta[1..=self.covariates])
            .fold(theta[0], |acc, (&x, &b)| acc + x * b);
        obs.response - fit
    }
}

/// Row dG/dθ = (1, x1..xq, w) with w = (y − β0 − xᵀβ)/σ.
pub fn cauchy_reg_jac_row<T: Scalar>(obs: &Observation<T>, theta: &[T]) -> Vec<T> {
    let q = obs.covariates.len();
    let sigma = theta[q + 1];
    let fit = obs
        .covariates
        .iter()
        .zip(&theta[1..=q])
        .fold(theta[0], |acc, (&x, &b)| acc + x * b);
    let mut row = Vec::with_capacity(q + 2);
    row.push(T::one());
    row.extend_from_slice(&obs.covariates);
    row.push((obs.response - fit) / sigma);
    row
}

impl<T: Scalar> Model<T> for CauchyRegression<T> {
    fn name(&self) -> &str {
        "cauchy-regression"
    }

    fn dim(&self) -> usize {
        self.covariates + 2
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = vec!["beta0".to_string()];
        v.extend((1..=self.covariates).map(|j| format!("beta{j}")));
        v.push("sigma".into());
        v
    }

    fn covariate_dim(&self) -> usize {
        self.covariates
    }

    fn in_support(&self, theta: &[T]) -> bool {
        theta.iter().all(|v| v.is_finite()) && theta[self.covariates + 1] > T::zero()
    }

    fn to_unconstrained(&self, theta: &[T]) -> Vec<T> {
        let mut z = theta.to_vec();
        let s = self.covariates + 1;
        z[s] = theta[s].ln();
        z
    }

    fn from_unconstrained(&self, z: &[T]) -> (Vec<T>, T) {
        let mut theta = z.to_vec();
        let s = self.covariates + 1;
        theta[s] = z[s].exp();
        (theta, z[s])
    }

    fn log_likelihood(&self, data: &[Observation<T>], theta: &[T]) -> Result<T> {
        let sigma = theta[self.covariates + 1];
        let inv = T::one() / sigma;
        let mut acc = T::zero();
        for o in data {
            let w = self.residual(o, theta) * inv;
            acc -= (w * w).ln_1p();
        }
        let n = T::from_usize_lossy(data.len());
        acc -= n * (T::lit(std::f64::consts::PI).ln() + sigma.ln());
        if acc.is_nan() {
            return Err(Error::ModelEvaluation("cauchy log-likelihood is NaN".into()));
        }
        Ok(acc)
    }

    fn jacobian(&self, data: &[Observation<T>], theta: &[T]) -> Result<Option<Matrix<T>>> {
        let p = self.dim();
        let inv = T::one() / theta[p - 1];
        let mut m = Matrix::zeros(data.len(), p);
        for (i, o) in data.iter().enumerate() {
            let w = self.residual(o, theta) * inv;
            let row = m.row_mut(i);
            row[0] = T::one();
            row[1..p - 1].copy_from_slice(&o.covariates);
            row[p - 1] = w;
        }
        Ok(Some(m))
    }

    fn simulate(&self, theta: &[T], n: usize, rng: &mut dyn RngCore) -> Vec<Observation<T>> {
        let q = self.covariates;
        let rho = self.rho.as_f64();
        let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
        let cauchy = Cauchy::new(0.0, 1.0).expect("valid cauchy");
        let theta: Vec<f64> = theta.iter().map(|v| v.as_f64()).collect();
        (0..n)
            .map(|_| {
                let common: f64 = rng.sample(StandardNormal);
                let x: Vec<f64> = (0..q)
                    .map(|_| shared * common + own * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let w: f64 = rng.sample(cauchy);
                let y = theta[0] + x.iter().zip(&theta[1..=q]).map(|(a, b)| a * b).sum::<f64>() + theta[q + 1] * w;
                Observation::with_covariates(T::lit(y), x.into_iter().map(T::lit).collect())
            })
            .collect()
    }

    /// Least squares slopes, then a median intercept and the median absolute
    /// residual as the scale (the MAD of a Cauchy equals its scale).
    fn initial_guess(&self, data: &[Observation<T>]) -> Vec<T> {
        let q = self.covariates;
        let p = q + 1;
        let mut xtx = Matrix::<T>::zeros(p, p);
        let mut xty = vec![T::zero(); p];
        for o in data {
            let mut row = Vec::with_capacity(p);
            row.push(T::one());
            row.extend_from_slice(&o.covariates);
            for i in 0..p {
                xty[i] += row[i] * o.response;
                for j in 0..p {
                    xtx[(i, j)] += row[i] * row[j];
                }
            }
        }
        let mut theta = vec![T::zero(); q + 2];
        if let Some(inv) = spd_inverse(&xtx) {
            for i in 0..p {
                theta[i] = (0..p).map(|j| inv[(i, j)] * xty[j]).sum();
            }
        }
        theta[q + 1] = T::one();
        let mut resid: Vec<T> = data.iter().map(|o| self.residual(o, &theta)).collect();
        if !resid.is_empty() {
            resid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = resid[resid.len() / 2];
            theta[0] += med;
            let mut abs: Vec<T> = resid.iter().map(|r| (*r - med).abs()).collect();
            abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            theta[q + 1] = abs[abs.len() / 2].max(T::lit(1e-3));
        }
        theta
    }
}
