use rand::{Rng, RngCore};

use super::{empirical_quantile, Model, Observation};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{ln1p_ratio, ln_logistic, logistic, logit, Scalar};

const XI_ZERO: f64 = 1e-8;

/// Quantile of a threshold-exceedance model: with exceedance rate ζ above
/// threshold `u` and generalized-Pareto excesses (σ, ξ), the level-`prob`
/// quantile is `u + (σ/ξ)[((1−prob)/ζ)^(−ξ) − 1]` (exponential limit when
/// ξ → 0).
pub fn gpd_tail_quantile<T: Scalar>(u: T, sigma: T, xi: T, zeta: T, prob: T) -> Result<T> {
    if !(prob > T::zero() && prob < T::one()) {
        return Err(Error::InvalidArgument(format!("probability {prob} outside (0, 1)")));
    }
    let ratio = (T::one() - prob) / zeta;
    if ratio > T::one() + T::lit(1e-12) {
        return Err(Error::QuantileBelowThreshold {
            prob: prob.as_f64(),
            floor: (T::one() - zeta).as_f64(),
        });
    }
    if ratio >= T::one() {
        return Ok(u);
    }
    if xi.abs() < T::lit(XI_ZERO) {
        return Ok(u - sigma * ratio.ln());
    }
    Ok(u + sigma / xi * (ratio.powf(-xi) - T::one()))
}

/// Generalized-Pareto model for exceedances over a fixed threshold with
/// θ = (σ, ξ, ζ): excess scale, shape and exceedance rate.
///
/// Observations at or below the threshold only inform ζ, through a binomial
/// likelihood. The fiducial Jacobian combines the D-norm of the excess rows
/// (for σ, ξ) with the binomial fiducial factor `ζ^(-1/2) (1-ζ)^(-1/2)`.
#[derive(Clone, Debug)]
pub struct GpdTail<T> {
    threshold: T,
}

impl<T: Scalar> GpdTail<T> {
    pub fn new(threshold: T) -> Self {
        GpdTail { threshold }
    }

    /// Place the threshold at the empirical `quantile` of `data`.
    pub fn from_data(data: &[Observation<T>], quantile: T) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("cannot place a threshold on empty data".into()));
        }
        if !(quantile > T::zero() && quantile < T::one()) {
            return Err(Error::InvalidConfig(format!("threshold quantile {quantile} outside (0, 1)")));
        }
        let mut ys: Vec<T> = data.iter().map(|o| o.response).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(GpdTail::new(empirical_quantile(&ys, quantile)))
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn tail_quantile(&self, theta: &[T], prob: T) -> Result<T> {
        gpd_tail_quantile(self.threshold, theta[0], theta[1], theta[2], prob)
    }

    /// log density of an excess `z > 0`; `-inf` outside the support.
    pub fn ln_excess_pdf(z: T, sigma: T, xi: T) -> T {
        let a = xi * z / sigma;
        if a <= -T::one() {
            return T::neg_infinity();
        }
        -sigma.ln() - (z / sigma) * ln1p_ratio(a) - a.ln_1p()
    }

    /// Excess CDF, used by the finite-difference checks.
    pub fn excess_cdf(z: T, sigma: T, xi: T) -> T {
        let a = xi * z / sigma;
        T::one() - (-(z / sigma) * ln1p_ratio(a)).exp()
    }

    /// Row ∇(σ, ξ) F(z) / f(z) for an excess `z`.
    pub fn excess_jac_row(z: T, sigma: T, xi: T) -> Option<[T; 2]> {
        let a = xi * z / sigma;
        if a <= -T::one() {
            return None;
        }
        let d_sigma = -z / sigma;
        let d_xi = if a.abs() < T::lit(1e-3) {
            // (a − (1+a) ln(1+a)) / a² as a series
            let s = T::lit(-0.5) + a / T::lit(6.0) - a * a / T::lit(12.0) + a * a * a / T::lit(20.0);
            z * z / sigma * s
        } else {
            sigma / (xi * xi) * (a - (T::one() + a) * a.ln_1p())
        };
        Some([d_sigma, d_xi])
    }

    fn excesses<'a>(&'a self, data: &'a [Observation<T>]) -> impl Iterator<Item = T> + 'a {
        data.iter()
            .map(|o| o.response - self.threshold)
            .filter(|z| *z > T::zero())
    }
}

impl<T: Scalar> Model<T> for GpdTail<T> {
    fn name(&self) -> &str {
        "gpd"
    }

    fn dim(&self) -> usize {
        3
    }

    fn param_names(&self) -> Vec<String> {
        vec!["sigma".into(), "xi".into(), "zeta".into()]
    }

    fn in_support(&self, theta: &[T]) -> bool {
        theta.iter().all(|v| v.is_finite())
            && theta[0] > T::zero()
            && theta[1] > -T::one()
            && theta[2] > T::zero()
            && theta[2] < T::one()
    }

    fn to_unconstrained(&self, theta: &[T]) -> Vec<T> {
        vec![theta[0].ln(), theta[1], logit(theta[2])]
    }

    fn from_unconstrained(&self, z: &[T]) -> (Vec<T>, T) {
        let zeta = logistic(z[2]);
        let lj = z[0] + ln_logistic(z[2]) + ln_logistic(-z[2]);
        (vec![z[0].exp(), z[1], zeta], lj)
    }

    fn log_likelihood(&self, data: &[Observation<T>], theta: &[T]) -> Result<T> {
        let (sigma, xi, zeta) = (theta[0], theta[1], theta[2]);
        let mut acc = T::zero();
        let mut exceed = 0usize;
        for z in self.excesses(data) {
            exceed += 1;
            let l = Self::ln_excess_pdf(z, sigma, xi);
            if l == T::neg_infinity() {
                return Ok(l);
            }
            acc += l;
        }
        let below = data.len() - exceed;
        acc += T::from_usize_lossy(exceed) * zeta.ln()
            + T::from_usize_lossy(below) * (T::one() - zeta).ln();
        if acc.is_nan() {
            return Err(Error::ModelEvaluation("gpd log-likelihood is NaN".into()));
        }
        Ok(acc)
    }

    fn jacobian(&self, data: &[Observation<T>], theta: &[T]) -> Result<Option<Matrix<T>>> {
        let mut rows = Vec::new();
        for z in self.excesses(data) {
            match Self::excess_jac_row(z, theta[0], theta[1]) {
                Some(r) => rows.extend_from_slice(&r),
                None => return Ok(None),
            }
        }
        let n = rows.len() / 2;
        Ok(Some(Matrix::from_row_major(n, 2, rows)?))
    }

    fn log_jacobian_extra(&self, _data: &[Observation<T>], theta: &[T]) -> T {
        let zeta = theta[2];
        -T::lit(0.5) * (zeta.ln() + (T::one() - zeta).ln())
    }

    fn simulate(&self, theta: &[T], n: usize, rng: &mut dyn RngCore) -> Vec<Observation<T>> {
        let (sigma, xi, zeta) = (theta[0].as_f64(), theta[1].as_f64(), theta[2].as_f64());
        let u = self.threshold.as_f64();
        (0..n)
            .map(|_| {
                let v = 1.0 - rng.random::<f64>();
                let y = if rng.random::<f64>() < zeta {
                    if xi.abs() < XI_ZERO {
                        u - sigma * v.ln()
                    } else {
                        u + sigma / xi * (v.powf(-xi) - 1.0)
                    }
                } else {
                    u + v.ln()
                };
                Observation::scalar(T::lit(y))
            })
            .collect()
    }

    fn initial_guess(&self, data: &[Observation<T>]) -> Vec<T> {
        let ex: Vec<T> = self.excesses(data).collect();
        let n = T::from_usize_lossy(data.len());
        let k = T::from_usize_lossy(ex.len());
        let mean_excess = if ex.is_empty() {
            T::one()
        } else {
            ex.iter().copied().sum::<T>() / k
        };
        let xi0 = T::lit(0.1);
        vec![
            (mean_excess * (T::one() - xi0)).max(T::lit(1e-6)),
            xi0,
            (k + T::lit(0.5)) / (n + T::one()),
        ]
    }
}
