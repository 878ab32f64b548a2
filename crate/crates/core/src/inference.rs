//! Interval estimates, confidence curves and kernel density estimates from
//! a final fiducial sample.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::combiner::WeightedSample;
use crate::error::{Error, Result};
use crate::scalar::{std_normal_pdf, Scalar};

const WEIGHTED_TOL: f64 = 1e-12;

/// Right-continuous step CDF of one coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCdf<T> {
    /// Distinct support points, ascending.
    support: Vec<T>,
    /// Cumulative mass at each support point.
    cum: Vec<T>,
    /// Uniform weights use exact i/N masses; weighted CDFs compare with a
    /// small tolerance.
    uniform: bool,
}

impl<T: Scalar> StepCdf<T> {
    /// Empirical CDF of equally weighted values.
    pub fn uniform(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("sample contains NaN".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = T::from_usize_lossy(sorted.len());
        let mut support = Vec::new();
        let mut cum = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            let c = T::from_usize_lossy(i + 1) / n;
            if support.last() == Some(&v) {
                *cum.last_mut().unwrap() = c;
            } else {
                support.push(v);
                cum.push(c);
            }
        }
        Ok(StepCdf {
            support,
            cum,
            uniform: true,
        })
    }

    /// Weighted CDF; `probabilities` must be nonnegative and sum to 1.
    pub fn weighted(values: &[T], probabilities: &[T]) -> Result<Self> {
        if values.len() != probabilities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values with {} weights",
                values.len(),
                probabilities.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty sample".into()));
        }
        let mut pairs: Vec<(T, T)> = values.iter().copied().zip(probabilities.iter().copied()).collect();
        if pairs.iter().any(|(v, p)| v.is_nan() || !(*p >= T::zero())) {
            return Err(Error::InvalidArgument("NaN value or negative weight".into()));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut support = Vec::new();
        let mut cum = Vec::new();
        let mut acc = T::zero();
        for (v, p) in pairs {
            acc += p;
            if support.last() == Some(&v) {
                *cum.last_mut().unwrap() = acc;
            } else {
                support.push(v);
                cum.push(acc);
            }
        }
        let total = acc;
        if (total.as_f64() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        for c in cum.iter_mut() {
            *c = (*c / total).min(T::one());
        }
        *cum.last_mut().unwrap() = T::one();
        Ok(StepCdf {
            support,
            cum,
            uniform: false,
        })
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    /// R(t) = P(ϑ ≤ t).
    pub fn eval(&self, t: T) -> T {
        let k = self.support.partition_point(|&s| s <= t);
        if k == 0 {
            T::zero()
        } else {
            self.cum[k - 1]
        }
    }

    /// Generalized inverse inf{t : R(t) ≥ q}.
    pub fn quantile(&self, q: T) -> T {
        let tol = if self.uniform { T::zero() } else { T::lit(WEIGHTED_TOL) };
        let k = self.cum.partition_point(|&c| c < q - tol);
        self.support[k.min(self.support.len() - 1)]
    }

    pub fn min(&self) -> T {
        self.support[0]
    }

    pub fn max(&self) -> T {
        self.support[self.support.len() - 1]
    }
}

/// CDF of coordinate `coord` of a (possibly weighted) sample.
pub fn marginal_cdf<T: Scalar>(sample: &WeightedSample<T>, coord: usize) -> Result<StepCdf<T>> {
    if coord >= sample.particles.dim() {
        return Err(Error::DimensionMismatch(format!(
            "coordinate {coord} of a {}-dimensional sample",
            sample.particles.dim()
        )));
    }
    let values = sample.particles.column(coord);
    if sample.is_uniform() {
        StepCdf::uniform(&values)
    } else {
        StepCdf::weighted(&values, &sample.probabilities()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// (-inf, R⁻¹(α)]
    Lower,
    /// [R⁻¹(1-α), inf)
    Upper,
    /// [R⁻¹(α/2), R⁻¹(1-α/2)], a level 1-α interval.
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

pub fn invert_ci<T: Scalar>(cdf: &StepCdf<T>, alpha: T, side: Side) -> Result<Interval<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let half = T::lit(0.5);
    Ok(match side {
        Side::Lower => Interval {
            lower: T::neg_infinity(),
            upper: cdf.quantile(alpha),
        },
        Side::Upper => Interval {
            lower: cdf.quantile(T::one() - alpha),
            upper: T::infinity(),
        },
        Side::TwoSided => Interval {
            lower: cdf.quantile(alpha * half),
            upper: cdf.quantile(T::one() - alpha * half),
        },
    })
}

/// cc(t) = |2R(t) - 1| on a sorted grid.
pub fn confidence_curve<T: Scalar>(cdf: &StepCdf<T>, grid: &[T]) -> Result<Vec<(T, T)>> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("grid must be sorted".into()));
    }
    let two = T::lit(2.0);
    Ok(grid
        .iter()
        .map(|&t| (t, (two * cdf.eval(t) - T::one()).abs()))
        .collect())
}

/// Points where a confidence curve crosses level γ: the first grid point
/// whose confidence drops to γ or below, and the first point past the
/// curve's minimum that rises back to γ. With the CDF support as grid
/// these are the endpoints of the central level-γ interval.
pub fn crossings<T: Scalar>(curve: &[(T, T)], gamma: T) -> Option<(T, T)> {
    let tol = T::lit(WEIGHTED_TOL);
    let lo = curve.iter().position(|&(_, c)| c <= gamma + tol)?;
    let argmin = curve
        .iter()
        .enumerate()
        .skip(lo)
        .fold((lo, curve[lo].1), |best, (i, &(_, c))| if c < best.1 { (i, c) } else { best })
        .0;
    let hi = curve[argmin..]
        .iter()
        .position(|&(_, c)| c >= gamma - tol)
        .map(|i| i + argmin)?;
    Some((curve[lo].0, curve[hi].0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kde<T> {
    pub bandwidth: T,
    pub grid: Vec<T>,
    pub density: Vec<T>,
}

pub const KDE_GRID_POINTS: usize = 512;

/// Gaussian kernel density estimate with Silverman's bandwidth
/// 0.9·min(sd, IQR/1.34)·n^(-1/5). With weights, moments and quantiles are
/// weighted and n is the Kish effective size. Without a grid, one spanning
/// the data ±4 bandwidths is used.
pub fn kde<T: Scalar>(values: &[T], probabilities: Option<&[T]>, grid: Option<&[T]>) -> Result<Kde<T>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("{n} values")));
    }
    let uniform;
    let probs = match probabilities {
        Some(p) => p,
        None => {
            uniform = vec![T::one() / T::from_usize_lossy(n); n];
            &uniform
        }
    };
    let cdf = if probabilities.is_some() {
        StepCdf::weighted(values, probs)?
    } else {
        StepCdf::uniform(values)?
    };
    let mean: T = values.iter().zip(probs).map(|(&v, &p)| v * p).sum();
    let var: T = values.iter().zip(probs).map(|(&v, &p)| (v - mean) * (v - mean) * p).sum();
    let n_eff = T::one() / probs.iter().map(|&p| p * p).sum::<T>();
    // unbiased for the uniform case
    let sd = (var * n_eff / (n_eff - T::one()).max(T::one())).sqrt();
    let iqr = cdf.quantile(T::lit(0.75)) - cdf.quantile(T::lit(0.25));
    let spread = if iqr > T::zero() { sd.min(iqr / T::lit(1.34)) } else { sd };
    let h = T::lit(0.9) * spread * n_eff.powf(T::lit(-0.2));
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::DegenerateSample("all values are equal; bandwidth is zero".into()));
    }
    let grid: Vec<T> = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lo = cdf.min() - T::lit(4.0) * h;
            let hi = cdf.max() + T::lit(4.0) * h;
            let step = (hi - lo) / T::from_usize_lossy(KDE_GRID_POINTS - 1);
            (0..KDE_GRID_POINTS)
                .map(|i| lo + step * T::from_usize_lossy(i))
                .collect()
        }
    };
    let density = grid
        .iter()
        .map(|&t| {
            values
                .iter()
                .zip(probs)
                .map(|(&v, &p)| p * std_normal_pdf((t - v) / h))
                .sum::<T>()
                / h
        })
        .collect();
    Ok(Kde {
        bandwidth: h,
        grid,
        density,
    })
}

/// One row of a summary's interval table. Infinite endpoints are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiEntry {
    pub side: Side,
    pub alpha: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Inference summary of one coordinate of a fiducial sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiducialSummary {
    pub coord: usize,
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub sorted_values: Vec<f64>,
    /// Probabilities aligned with `sorted_values`; absent for uniform
    /// samples.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probabilities: Option<Vec<f64>>,
    pub ci: Vec<CiEntry>,
    /// (t, |2R(t) - 1|) at each support point.
    pub curve: Vec<(f64, f64)>,
    pub kde: Vec<(f64, f64)>,
    pub kde_bandwidth: Option<f64>,
}

/// Default interval table: one-sided bounds at 0.05 and 0.95, and the
/// two-sided 90% and 95% intervals.
pub const DEFAULT_CI: [(Side, f64); 6] = [
    (Side::Lower, 0.05),
    (Side::Lower, 0.95),
    (Side::Upper, 0.05),
    (Side::Upper, 0.95),
    (Side::TwoSided, 0.10),
    (Side::TwoSided, 0.05),
];

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl FiducialSummary {
    pub fn from_sample<T: Scalar>(
        sample: &WeightedSample<T>,
        coord: usize,
        name: &str,
        table: &[(Side, f64)],
    ) -> Result<Self> {
        let cdf = marginal_cdf(sample, coord)?;
        let values = sample.particles.column(coord);
        let probs = sample.probabilities()?;
        let (mean, sd) = sample.moments(coord)?;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
        let sorted_values = order.iter().map(|&i| values[i].as_f64()).collect();
        let probabilities = (!sample.is_uniform()).then(|| order.iter().map(|&i| probs[i].as_f64()).collect());
        let ci = table
            .iter()
            .map(|&(side, alpha)| {
                let iv = invert_ci(&cdf, T::lit(alpha), side)?;
                Ok(CiEntry {
                    side,
                    alpha,
                    lower: finite(iv.lower.as_f64()),
                    upper: finite(iv.upper.as_f64()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let curve = confidence_curve(&cdf, cdf.support())?
            .into_iter()
            .map(|(t, c)| (t.as_f64(), c.as_f64()))
            .collect();
        let weights = (!sample.is_uniform()).then_some(probs.as_slice());
        let (kde_pairs, kde_bandwidth) = match kde(&values, weights, None) {
            Ok(k) => (
                k.grid
                    .iter()
                    .zip(&k.density)
                    .map(|(g, d)| (g.as_f64(), d.as_f64()))
                    .collect(),
                Some(k.bandwidth.as_f64()),
            ),
            Err(Error::DegenerateSample(_)) => (Vec::new(), None),
            Err(e) => return Err(e),
        };
        Ok(FiducialSummary {
            coord,
            name: name.to_string(),
            mean: mean.as_f64(),
            sd: sd.as_f64(),
            median: cdf.quantile(T::lit(0.5)).as_f64(),
            sorted_values,
            probabilities,
            ci,
            curve,
            kde: kde_pairs,
            kde_bandwidth,
        })
    }

    /// Write the confidence curve as `t,confidence`.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "confidence"])?;
        for (t, c) in &self.curve {
            w.write_record([t.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::Particles;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::BTreeSet;

    fn one_to_hundred() -> StepCdf<f64> {
        StepCdf::uniform(&(1..=100).map(f64::from).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let c = StepCdf::uniform(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.eval(2.0), 2.0 / 3.0);
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(10.0), 1.0);
        let ties = StepCdf::uniform(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(ties.eval(0.0), 0.5);
        assert_eq!(ties.quantile(0.5), 0.0);
        assert_eq!(ties.quantile(0.50001), 1.0);
    }

    #[test]
    fn order_statistic_bounds() {
        let c = one_to_hundred();
        assert_eq!(invert_ci(&c, 0.95, Side::Lower).unwrap().upper, 95.0);
        let two = invert_ci(&c, 0.05, Side::TwoSided).unwrap();
        assert_eq!((two.lower, two.upper), (3.0, 98.0));
        let up = invert_ci(&c, 0.95, Side::Upper).unwrap();
        assert_eq!((up.lower, up.upper), (6.0, f64::INFINITY));
        let single = StepCdf::uniform(&[4.2]).unwrap();
        for side in [Side::Lower, Side::Upper, Side::TwoSided] {
            let iv = invert_ci(&single, 0.3, side).unwrap();
            assert!(iv.lower == 4.2 || iv.lower == f64::NEG_INFINITY);
            assert!(iv.upper == 4.2 || iv.upper == f64::INFINITY);
        }
        assert!(invert_ci(&c, 0.0, Side::Lower).is_err());
        assert!(invert_ci(&c, 1.0, Side::Lower).is_err());
    }

    #[test]
    fn bounds_monotone_and_self_consistent() {
        let mut rng = seed::rng(4);
        let v: Vec<f64> = (0..537).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c = StepCdf::uniform(&v).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let a = i as f64 / 100.0;
            let b = invert_ci(&c, a, Side::Lower).unwrap().upper;
            assert!(b >= prev);
            prev = b;
            let r = c.eval(b);
            assert!(r >= a && r < a + 1.0 / 537.0 + 1e-12);
        }
    }

    #[test]
    fn weighted_cdf_matches_replicated_uniform() {
        let w = StepCdf::weighted(&[1.0, 2.0, 3.0], &[0.25, 0.5, 0.25]).unwrap();
        let u = StepCdf::uniform(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        for q in [0.1, 0.25, 0.26, 0.5, 0.75, 0.76, 0.99] {
            assert_eq!(w.quantile(q), u.quantile(q), "q = {q}");
        }
        assert!(StepCdf::weighted(&[1.0, 2.0], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn curve_examples() {
        let c = one_to_hundred();
        let grid: Vec<f64> = c.support().to_vec();
        let cc = confidence_curve(&c, &grid).unwrap();
        assert!(cc[49].1.abs() < 1e-12);
        let far = confidence_curve(&c, &[-5.0, 500.0]).unwrap();
        assert_eq!(far[0].1, 1.0);
        assert_eq!(far[1].1, 1.0);
        let two = invert_ci(&c, 0.05, Side::TwoSided).unwrap();
        assert_eq!(crossings(&cc, 0.95), Some((two.lower, two.upper)));
        assert!(confidence_curve(&c, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn crossings_agree_with_inversion_on_random_samples() {
        for s in 0..20 {
            let mut rng = seed::rng(s);
            let n = 50 + s as usize * 37;
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let c = StepCdf::uniform(&v).unwrap();
            let cc = confidence_curve(&c, c.support()).unwrap();
            for gamma in [0.5, 0.8, 0.9, 0.95] {
                let iv = invert_ci(&c, 1.0 - gamma, Side::TwoSided).unwrap();
                assert_eq!(crossings(&cc, gamma), Some((iv.lower, iv.upper)), "n={n} gamma={gamma}");
            }
        }
    }

    #[test]
    fn kde_normal_oracle() {
        let mut rng = seed::rng(11);
        let v: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid: Vec<f64> = (0..=600).map(|i| -3.0 + i as f64 * 0.01).collect();
        let k = kde(&v, None, Some(&grid)).unwrap();
        let worst = grid
            .iter()
            .zip(&k.density)
            .map(|(&t, &d)| (d - std_normal_pdf(t)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "max deviation {worst}");
        let far = kde(&v, None, Some(&[50.0])).unwrap();
        assert!(far.density[0] < 1e-6);
    }

    #[test]
    fn kde_integrates_to_one_and_is_symmetric() {
        let k = kde(&[-1.0, 1.0], None, None).unwrap();
        let mass: f64 = k
            .grid
            .windows(2)
            .zip(k.density.windows(2))
            .map(|(g, d)| (g[1] - g[0]) * (d[0] + d[1]) / 2.0)
            .sum();
        assert!((mass - 1.0).abs() < 1e-3);
        let at = kde(&[-1.0_f64, 1.0], None, Some(&[-1.0, 1.0])).unwrap();
        assert!((at.density[0] - at.density[1]).abs() < 1e-15);
        let e = kde(&[2.0, 2.0, 2.0], None, None).unwrap_err();
        assert!(e.to_string().contains("degenerate sample"));
    }

    #[test]
    fn summary_json_is_stable() {
        let mut rng = seed::rng(2);
        let rows: Vec<[f64; 2]> = (0..300)
            .map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let sample = WeightedSample::uniform(Particles::from_rows(2, &rows).unwrap(), BTreeSet::from([0]), 300.0);
        let s = FiducialSummary::from_sample(&sample, 1, "b", &DEFAULT_CI).unwrap();
        assert!(s.sorted_values.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.kde.iter().all(|&(_, d)| d >= 0.0));
        let (lo, hi) = (s.sorted_values[0], s.sorted_values[299]);
        for e in &s.ci {
            for b in [e.lower, e.upper].into_iter().flatten() {
                assert!(b >= lo && b <= hi);
            }
        }
        let a = serde_json::to_string(&s).unwrap();
        let b = serde_json::to_string(&FiducialSummary::from_sample(&sample, 1, "b", &DEFAULT_CI).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut csv = Vec::new();
        s.write_curve_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("t,confidence\n"));
    }
}
