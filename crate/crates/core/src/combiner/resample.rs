use rand::Rng;

use super::Particles;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Systematic resampling indices: one uniform offset, `m` evenly spaced
/// positions through the cumulative weights. Each index appears either
/// ⌊m·p_t⌋ or ⌈m·p_t⌉ times.
pub fn systematic_indices<T: Scalar, R: Rng + ?Sized>(
    probabilities: &[T],
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidArgument("resample size must be positive".into()));
    }
    if probabilities.is_empty() {
        return Err(Error::InvalidArgument("no particles to resample".into()));
    }
    let total: f64 = probabilities.iter().map(|p| p.as_f64()).sum();
    if (total - 1.0).abs() > 1e-10 || probabilities.iter().any(|p| !(p.as_f64() >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "resampling probabilities must be nonnegative and sum to 1 (sum = {total})"
        )));
    }
    let offset: f64 = rng.random();
    let step = 1.0 / m as f64;
    let last = probabilities.len() - 1;
    let mut out = Vec::with_capacity(m);
    let mut idx = 0usize;
    let mut cum = probabilities[0].as_f64();
    for i in 0..m {
        let pos = (i as f64 + offset) * step;
        while pos >= cum && idx < last {
            idx += 1;
            cum += probabilities[idx].as_f64();
        }
        out.push(idx);
    }
    Ok(out)
}

/// Draw `m` particles by systematic resampling.
pub fn resample<T: Scalar, R: Rng + ?Sized>(
    particles: &Particles<T>,
    probabilities: &[T],
    m: usize,
    rng: &mut R,
) -> Result<Particles<T>> {
    if probabilities.len() != particles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} particles",
            probabilities.len(),
            particles.len()
        )));
    }
    let idx = systematic_indices(probabilities, m, rng)?;
    Ok(particles.select(&idx))
}
