use rand::{Rng, RngCore};
use rand_distr::{Cauchy, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Model, Observation};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::{ln_std_normal_pdf, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Normal,
    Cauchy,
}

/// One-parameter location model `Y = μ + U` with unit-scale noise.
///
/// Every Jacobian row is (1), so J(y, μ) does not depend on μ.
#[derive(Clone, Copy, Debug)]
pub struct LocationModel {
    noise: NoiseKind,
}

impl LocationModel {
    pub fn new(noise: NoiseKind) -> Self {
        LocationModel { noise }
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn ln_pdf<T: Scalar>(&self, y: T, mu: T) -> T {
        let r = y - mu;
        match self.noise {
            NoiseKind::Normal => ln_std_normal_pdf(r),
            NoiseKind::Cauchy => -T::lit(std::f64::consts::PI).ln() - (r * r).ln_1p(),
        }
    }
}

impl<T: Scalar> Model<T> for LocationModel {
    fn name(&self) -> &str {
        match self.noise {
            NoiseKind::Normal => "normal-location",
            NoiseKind::Cauchy => "cauchy-location",
        }
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn in_support(&self, theta: &[T]) -> bool {
        theta[0].is_finite()
    }

    fn to_unconstrained(&self, theta: &[T]) -> Vec<T> {
        theta.to_vec()
    }

    fn from_unconstrained(&self, z: &[T]) -> (Vec<T>, T) {
        (z.to_vec(), T::zero())
    }

    fn log_likelihood(&self, data: &[Observation<T>], theta: &[T]) -> Result<T> {
        Ok(data.iter().map(|o| self.ln_pdf(o.response, theta[0])).sum())
    }

    fn jacobian(&self, data: &[Observation<T>], _theta: &[T]) -> Result<Option<Matrix<T>>> {
        Ok(Some(Matrix::from_row_major(
            data.len(),
            1,
            vec![T::one(); data.len()],
        )?))
    }

    fn simulate(&self, theta: &[T], n: usize, rng: &mut dyn RngCore) -> Vec<Observation<T>> {
        let mu = theta[0].as_f64();
        let cauchy = Cauchy::new(0.0, 1.0).expect("valid cauchy");
        (0..n)
            .map(|_| {
                let u: f64 = match self.noise {
                    NoiseKind::Normal => rng.sample(StandardNormal),
                    NoiseKind::Cauchy => rng.sample(cauchy),
                };
                Observation::scalar(T::lit(mu + u))
            })
            .collect()
    }

    fn initial_guess(&self, data: &[Observation<T>]) -> Vec<T> {
        let mut ys: Vec<T> = data.iter().map(|o| o.response).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vec![ys.get(ys.len() / 2).copied().unwrap_or_else(T::zero)]
    }
}
