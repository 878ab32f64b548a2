use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{mean_sd, Model, Observation};
use crate::error::{Error, Result};
use crate::fiducial::{log_d_norm, DNorm};
use crate::linalg::Matrix;
use crate::scalar::{
    ln_logistic, ln_std_normal_pdf, log_add_exp, logistic, logit, std_normal_cdf, Scalar,
};

/// `γ N(μ1, 1) + (1 − γ) N(μ2, 1)` with θ = (μ1, μ2, γ), μ1 < μ2.
///
/// Sampled as (μ1, log(μ2 − μ1), logit γ) so the ordering constraint holds
/// everywhere in the unconstrained space.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalMixture;

impl NormalMixture {
    pub fn cdf<T: Scalar>(y: T, theta: &[T]) -> T {
        let g = theta[2];
        g * std_normal_cdf(y - theta[0]) + (T::one() - g) * std_normal_cdf(y - theta[1])
    }

    pub fn ln_pdf<T: Scalar>(y: T, theta: &[T]) -> T {
        let g = theta[2];
        log_add_exp(
            g.ln() + ln_std_normal_pdf(y - theta[0]),
            (T::one() - g).ln() + ln_std_normal_pdf(y - theta[1]),
        )
    }
}

/// `Φ(a) − Φ(b)` for `a > b`, taken from whichever tail keeps precision.
fn normal_cdf_diff<T: Scalar>(a: T, b: T) -> T {
    if b > T::zero() {
        std_normal_cdf(-b) - std_normal_cdf(-a)
    } else {
        std_normal_cdf(a) - std_normal_cdf(b)
    }
}

/// Jacobian row ∇_θ F(y; θ) / f(y; θ) of the inverse-CDF generating
/// equation for the unit-variance normal mixture.
///
/// Returns `None` when f(y; θ) underflows.
pub fn mixture_jac_row<T: Scalar>(y: T, theta: &[T]) -> Option<[T; 3]> {
    mixture_row_and_ln_pdf(y, theta).map(|(r, _)| r)
}

/// The row together with ln f(y; θ).
fn mixture_row_and_ln_pdf<T: Scalar>(y: T, theta: &[T]) -> Option<([T; 3], T)> {
    let (m1, m2, g) = (theta[0], theta[1], theta[2]);
    let (d1, d2) = (y - m1, y - m2);
    let diff = if m1 <= m2 {
        normal_cdf_diff(d1, d2)
    } else {
        -normal_cdf_diff(d2, d1)
    };
    let half = T::lit(0.5);
    // the 1/sqrt(2π) factors cancel in the ratios
    let w1 = g * (-half * d1 * d1).exp();
    let w2 = (T::one() - g) * (-half * d2 * d2).exp();
    let fs = w1 + w2;
    if fs > T::lit(1e-200) {
        let s2pi = T::lit((2.0 * std::f64::consts::PI).sqrt());
        let ln_f = fs.ln() - s2pi.ln();
        return Some(([-w1 / fs, -w2 / fs, diff * s2pi / fs], ln_f));
    }
    let l1 = g.ln() + ln_std_normal_pdf(d1);
    let l2 = (T::one() - g).ln() + ln_std_normal_pdf(d2);
    let lf = log_add_exp(l1, l2);
    if !lf.is_finite() {
        return None;
    }
    Some(([-(l1 - lf).exp(), -(l2 - lf).exp(), diff / lf.exp()], lf))
}

impl<T: Scalar> Model<T> for NormalMixture {
    fn name(&self) -> &str {
        "mixture"
    }

    fn dim(&self) -> usize {
        3
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu1".into(), "mu2".into(), "gamma".into()]
    }

    fn in_support(&self, theta: &[T]) -> bool {
        theta.iter().all(|v| v.is_finite())
            && theta[0] < theta[1]
            && theta[2] > T::zero()
            && theta[2] < T::one()
    }

    fn to_unconstrained(&self, theta: &[T]) -> Vec<T> {
        vec![theta[0], (theta[1] - theta[0]).ln(), logit(theta[2])]
    }

    fn from_unconstrained(&self, z: &[T]) -> (Vec<T>, T) {
        let gap = z[1].exp();
        let g = logistic(z[2]);
        let log_jac = z[1] + ln_logistic(z[2]) + ln_logistic(-z[2]);
        (vec![z[0], z[0] + gap, g], log_jac)
    }

    fn log_likelihood(&self, data: &[Observation<T>], theta: &[T]) -> Result<T> {
        let (m1, m2, g) = (theta[0], theta[1], theta[2]);
        let (lg, lg1) = (g.ln(), (T::one() - g).ln());
        let mut acc = T::zero();
        for o in data {
            let y = o.response;
            acc += log_add_exp(lg + ln_std_normal_pdf(y - m1), lg1 + ln_std_normal_pdf(y - m2));
        }
        if acc.is_nan() {
            return Err(Error::ModelEvaluation("mixture log-likelihood is NaN".into()));
        }
        Ok(acc)
    }

    fn jacobian(&self, data: &[Observation<T>], theta: &[T]) -> Result<Option<Matrix<T>>> {
        let mut m = Matrix::zeros(data.len(), 3);
        for (i, o) in data.iter().enumerate() {
            match mixture_jac_row(o.response, theta) {
                Some(r) => m.row_mut(i).copy_from_slice(&r),
                None => return Ok(None),
            }
        }
        Ok(Some(m))
    }

    fn log_likelihood_and_jacobian(
        &self,
        data: &[Observation<T>],
        theta: &[T],
        norm: DNorm,
    ) -> Result<(T, T)> {
        let mut m = Matrix::zeros(data.len(), 3);
        let mut ll = T::zero();
        for (i, o) in data.iter().enumerate() {
            match mixture_row_and_ln_pdf(o.response, theta) {
                Some((r, lf)) => {
                    m.row_mut(i).copy_from_slice(&r);
                    ll += lf;
                }
                // f underflows, so the likelihood is zero
                None => return Ok((T::neg_infinity(), T::neg_infinity())),
            }
        }
        Ok((ll, log_d_norm(&m, norm)?))
    }

    fn simulate(&self, theta: &[T], n: usize, rng: &mut dyn RngCore) -> Vec<Observation<T>> {
        let (m1, m2, g) = (theta[0].as_f64(), theta[1].as_f64(), theta[2].as_f64());
        (0..n)
            .map(|_| {
                let first = rng.random::<f64>() < g;
                let z: f64 = rng.sample(StandardNormal);
                Observation::scalar(T::lit(if first { m1 } else { m2 } + z))
            })
            .collect()
    }

    fn initial_guess(&self, data: &[Observation<T>]) -> Vec<T> {
        let (mean, sd) = mean_sd(data.iter().map(|o| o.response));
        let half = sd.max(T::lit(0.1));
        vec![mean - half, mean + half, T::lit(0.5)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util::{central_diff, close};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PHI1: f64 = 0.241_970_724_519_143_37;

    #[test]
    fn row_at_origin() {
        let r = mixture_jac_row(0.0_f64, &[-1.0, 1.0, 0.6]).unwrap();
        assert!((r[0] + 0.6).abs() < 1e-12);
        assert!((r[1] + 0.4).abs() < 1e-12);
        assert!((r[2] - 0.682_689_492_137_085_9 / PHI1).abs() < 1e-10);
        // 0.6826895 / 0.2419707 = 2.821372; a 2.82135 reference is a
        // rounding slip, so only agreement to four decimals is checked
        assert!((r[2] - 2.82135).abs() < 1e-4);
        assert!((NormalMixture::ln_pdf(0.0, &[-1.0, 1.0, 0.6]) - PHI1.ln()).abs() < 1e-12);
    }

    #[test]
    fn row_far_in_upper_tail() {
        // Far above both components the upper component dominates: a
        // location shift of μ2 moves the quantile one-for-one, so the row
        // tends to (0, -1, 0) rather than vanishing.
        let theta = [-1.0_f64, 1.0, 0.6];
        let r = mixture_jac_row(20.0, &theta).unwrap();
        assert!(r[0].abs() < 1e-15);
        assert!((r[1] + 1.0).abs() < 1e-12);
        // The CDF saturates at 1, so difference the survival function.
        let s = |t: &[f64]| {
            t[2] * std_normal_cdf(-(20.0 - t[0])) + (1.0 - t[2]) * std_normal_cdf(-(20.0 - t[1]))
        };
        let fd = -central_diff(s, &theta, 2, 1e-6) / NormalMixture::ln_pdf(20.0, &theta).exp();
        assert!(close(r[2], fd, 1e-5), "{} vs {}", r[2], fd);
        assert!(r[2] > 0.0 && r[2] < 0.15);
    }

    #[test]
    fn symmetric_components() {
        let r = mixture_jac_row(0.0_f64, &[-1.5, 1.5, 0.5]).unwrap();
        assert!((r[0] - r[1]).abs() < 1e-15);
        let f = NormalMixture::ln_pdf(0.0_f64, &[-1.5, 1.5, 0.5]).exp();
        let expect = -0.5 * crate::scalar::std_normal_pdf(1.5) / f;
        assert!((r[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn rows_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m1: f64 = rng.random_range(-2.0..0.5);
            let m2 = m1 + rng.random_range(0.3..3.0);
            let g = rng.random_range(0.1..0.9);
            let theta = [m1, m2, g];
            let y: f64 = rng.random_range(-4.0..4.0);
            let row = mixture_jac_row(y, &theta).unwrap();
            let dens = NormalMixture::ln_pdf(y, &theta).exp();
            for j in 0..3 {
                // difference whichever of F and 1 - F is small to avoid
                // cancellation near 1
                let upper = NormalMixture::cdf(y, &theta) > 0.5;
                let fd = if upper {
                    let s = |t: &[f64]| t[2] * std_normal_cdf(t[0] - y) + (1.0 - t[2]) * std_normal_cdf(t[1] - y);
                    -central_diff(s, &theta, j, 1e-5) / dens
                } else {
                    central_diff(|t| NormalMixture::cdf(y, t), &theta, j, 1e-5) / dens
                };
                assert!(close(row[j], fd, 1e-5), "coord {j}: {} vs {fd} at {theta:?}, y={y}", row[j]);
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let theta = [-1.0_f64, 1.0, 0.6];
        let n = 20_000;
        let h = 20.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let y = -10.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * NormalMixture::ln_pdf(y, &theta).exp();
        }
        assert!((s * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn transform_round_trip() {
        let m = NormalMixture;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let m1: f64 = rng.random_range(-5.0..5.0);
            let theta = [m1, m1 + rng.random_range(0.01..5.0), rng.random_range(0.01..0.99)];
            let z = Model::<f64>::to_unconstrained(&m, &theta);
            let (back, lj) = Model::<f64>::from_unconstrained(&m, &z);
            for j in 0..3 {
                assert!((back[j] - theta[j]).abs() < 1e-12, "{back:?} vs {theta:?}");
            }
            assert!(lj.is_finite());
        }
    }

    #[test]
    fn simulation_mean_and_determinism() {
        let m = NormalMixture;
        let theta = [-1.0_f64, 1.0, 0.6];
        let n = 100_000;
        let data = m.simulate(&theta, n, &mut ChaCha8Rng::seed_from_u64(1));
        let mean = data.iter().map(|o| o.response).sum::<f64>() / n as f64;
        // Var = 1 + γ(1-γ)(μ2-μ1)² = 1.96
        assert!((mean + 0.2).abs() < 3.0 * (1.96 / n as f64).sqrt());
        let again = m.simulate(&theta, n, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(data, again);
        assert!(m.simulate(&theta, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }
}
