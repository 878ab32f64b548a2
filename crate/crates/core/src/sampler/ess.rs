use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Normalized autocorrelations ρ̂_0..ρ̂_{n-1} via zero-padded FFT.
fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let c0 = buf[0].re;
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// Autocorrelation-based effective sample size with Geyer's initial
/// monotone positive-sequence truncation.
///
/// The result is clamped to (0, n]; a constant series returns 1.
pub fn effective_sample_size<T: Scalar>(series: &[T]) -> Result<T> {
    let n = series.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "effective sample size needs at least 10 values, got {n}"
        )));
    }
    let x: Vec<f64> = series.iter().map(|v| v.as_f64()).collect();
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return Ok(T::one());
    }
    let rho = autocorrelation(&x);
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let mut gamma = rho[2 * m] + rho[2 * m + 1];
        if gamma <= 0.0 {
            break;
        }
        gamma = gamma.min(prev);
        prev = gamma;
        tau += 2.0 * gamma;
        m += 1;
    }
    let nf = n as f64;
    let ess = if tau <= 0.0 { nf } else { (nf / tau).min(nf) };
    Ok(T::lit(ess.max(f64::MIN_POSITIVE)))
}
