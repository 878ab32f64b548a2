use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major particle matrix: one row per draw, one column per parameter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Particles<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Particles<T> {
    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Particles {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut p = Self::with_capacity(dim, rows.len());
        for r in rows {
            if r.as_ref().len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "particle of length {} in a {dim}-dimensional sample",
                    r.as_ref().len()
                )));
            }
            p.push(r.as_ref());
        }
        Ok(p)
    }

    /// One-dimensional particles from scalar values.
    pub fn from_values(values: &[T]) -> Self {
        Particles {
            dim: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[T]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    /// New particle set made of the rows at `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.push(self.row(i));
        }
        out
    }

    pub fn extend(&mut self, other: &Particles<T>) {
        debug_assert_eq!(self.dim, other.dim);
        self.data.extend_from_slice(&other.data);
    }
}

/// Un-normalized log importance weights for the particles of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogWeightVector<T> {
    pub values: Vec<T>,
    /// Subset whose particles these weights belong to.
    pub source_subset: usize,
}

/// Normalize log-weights with log-sum-exp and report the Kish effective
/// sample size `1 / Σ p_t²`.
pub fn normalize_and_ess<T: Scalar>(log_weights: &[T]) -> Result<(Vec<T>, T)> {
    if log_weights.iter().any(|v| v.is_nan() || *v == T::infinity()) {
        return Err(Error::WeightDegeneracy("log-weights contain NaN or +inf".into()));
    }
    let max = log_weights.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::WeightDegeneracy(format!(
            "all {} log-weights are -inf",
            log_weights.len()
        )));
    }
    // shifting by the maximum keeps the largest term exactly 1
    let mut probs: Vec<T> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total: T = probs.iter().copied().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let sum_sq: T = probs.iter().map(|&p| p * p).sum();
    let n = T::from_usize_lossy(log_weights.len());
    let ess = (T::one() / sum_sq).max(T::one()).min(n);
    Ok((probs, ess))
}

/// A set of particles with log-weights and the subsets whose data the
/// weights have absorbed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample<T> {
    pub particles: Particles<T>,
    /// All zero after resampling.
    pub log_weights: Vec<T>,
    pub lineage: BTreeSet<usize>,
    /// Approximate effective sample size, accounting for both weight
    /// dispersion and chain autocorrelation.
    pub ess: f64,
}

impl<T: Scalar> WeightedSample<T> {
    pub fn uniform(particles: Particles<T>, lineage: BTreeSet<usize>, ess: f64) -> Self {
        let n = particles.len();
        WeightedSample {
            particles,
            log_weights: vec![T::zero(); n],
            lineage,
            ess,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        let first = self.log_weights.first().copied().unwrap_or_else(T::zero);
        self.log_weights.iter().all(|&w| w == first)
    }

    pub fn probabilities(&self) -> Result<Vec<T>> {
        if self.is_uniform() {
            let n = T::from_usize_lossy(self.len().max(1));
            return Ok(vec![T::one() / n; self.len()]);
        }
        normalize_and_ess(&self.log_weights).map(|(p, _)| p)
    }

    /// Weighted mean and standard deviation of coordinate `j`.
    pub fn moments(&self, j: usize) -> Result<(T, T)> {
        let probs = self.probabilities()?;
        let mean: T = self
            .particles
            .iter_rows()
            .zip(&probs)
            .map(|(r, &p)| r[j] * p)
            .sum();
        let var: T = self
            .particles
            .iter_rows()
            .zip(&probs)
            .map(|(r, &p)| (r[j] - mean) * (r[j] - mean) * p)
            .sum();
        Ok((mean, var.sqrt()))
    }
}

/// Fiducial probability of an assertion: the (weighted) fraction of
/// particles satisfying `predicate`.
pub fn estimate_r<T: Scalar>(sample: &WeightedSample<T>, predicate: impl Fn(&[T]) -> bool) -> Result<T> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if sample.is_uniform() {
        let hits = sample.particles.iter_rows().filter(|r| predicate(r)).count();
        return Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(sample.len()));
    }
    let probs = sample.probabilities()?;
    Ok(sample
        .particles
        .iter_rows()
        .zip(&probs)
        .filter(|(r, _)| predicate(r))
        .map(|(_, &p)| p)
        .sum::<T>()
        .min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let (p, ess) = normalize_and_ess(&[0.0_f64, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!((ess - 3.0).abs() < 1e-12);

        // 1000 + ln 2 is itself only representable to about 1e-13
        let (p, ess) = normalize_and_ess(&[1000.0_f64, 1000.0 + 2f64.ln()]).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12 && (p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((ess - 1.8).abs() < 1e-11);

        let ninf = f64::NEG_INFINITY;
        let (p, ess) = normalize_and_ess(&[0.0, ninf, ninf]).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        assert_eq!(ess, 1.0);

        let err = normalize_and_ess(&[ninf, ninf]).unwrap_err();
        assert!(err.to_string().contains("total weight degeneracy"));
    }

    #[test]
    fn estimate_r_counts() {
        let parts = Particles::from_values(&[1.0_f64, 2.0, 3.0, 4.0]);
        let s = WeightedSample::uniform(parts, BTreeSet::from([0]), 4.0);
        assert_eq!(estimate_r(&s, |_| true).unwrap(), 1.0);
        assert_eq!(estimate_r(&s, |_| false).unwrap(), 0.0);
        assert_eq!(estimate_r(&s, |r| r[0] > 2.0).unwrap(), 0.5);

        let mut w = s.clone();
        w.log_weights = vec![0.0, 0.0, 0.0, 3f64.ln()];
        assert!((estimate_r(&w, |r| r[0] > 3.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn particle_bookkeeping() {
        let p = Particles::from_rows(2, &[[1.0_f64, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.column(1), vec![2.0, 4.0, 6.0]);
        assert_eq!(p.select(&[2, 2, 0]).column(0), vec![5.0, 5.0, 1.0]);
        assert!(Particles::from_rows(2, &[vec![1.0_f64]]).is_err());
    }
}
