//! Generalized fiducial log-densities: model log-likelihood plus the log of
//! the Jacobian function J(y, θ), the D-norm of the matrix of
//! parameter-derivatives of the data-generating equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{determinant, Matrix};
use crate::models::{DataSubset, Model};
use crate::scalar::Scalar;

/// Default limit on the number of p x p minors D∞ may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Matrix of derivatives dG/dθ, one row per observation.
pub type JacobianMatrix<T> = Matrix<T>;

/// Which canonical D-norm turns the Jacobian matrix into J(y, θ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DNorm {
    /// Product of singular values, `sqrt(det(AᵀA))`.
    #[default]
    D2,
    /// Sum of absolute determinants of all p x p row-submatrices.
    DInf,
}

impl std::str::FromStr for DNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d2" => Ok(DNorm::D2),
            "dinf" | "d_inf" | "d-inf" => Ok(DNorm::DInf),
            other => Err(Error::InvalidArgument(format!("unknown norm '{other}'"))),
        }
    }
}

impl std::fmt::Display for DNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DNorm::D2 => "d2",
            DNorm::DInf => "dinf",
        })
    }
}

fn check_shape<T: Scalar>(a: &Matrix<T>) -> Result<()> {
    if a.rows() < a.cols() {
        return Err(Error::UnderdeterminedJacobian {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    Ok(())
}

/// ½ log det(AᵀA) from a Cholesky factor of the Gram matrix, or `None`
/// when some column is within an angle of 1e-4 of the span of the earlier
/// ones. Cholesky is invariant to column scaling, so only these angles
/// govern the precision lost by squaring A.
fn log_d2_gram<T: Scalar>(a: &Matrix<T>) -> Option<T> {
    let p = a.cols();
    let mut g = vec![T::zero(); p * p];
    for r in a.iter_rows() {
        for i in 0..p {
            let ri = r[i];
            for j in 0..=i {
                g[i * p + j] += ri * r[j];
            }
        }
    }
    if !g.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut log_det = T::zero();
    let mut min_sine = T::infinity();
    for j in 0..p {
        let diag = g[j * p + j];
        let mut d = diag;
        for k in 0..j {
            d -= g[j * p + k] * g[j * p + k];
        }
        if !(d > T::zero()) {
            return None;
        }
        let l = d.sqrt();
        g[j * p + j] = l;
        min_sine = min_sine.min(l / diag.sqrt());
        for i in (j + 1)..p {
            let mut v = g[i * p + j];
            for k in 0..j {
                v -= g[i * p + k] * g[j * p + k];
            }
            g[i * p + j] = v / l;
        }
        log_det += l.ln();
    }
    (min_sine >= T::lit(1e-4)).then_some(log_det)
}

/// log D₂(A) = Σ log σᵢ; `-inf` when A is numerically rank deficient.
pub fn log_d2<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    check_shape(a)?;
    if a.cols() == 0 {
        return Ok(T::zero());
    }
    if a.rows() >= 4 * a.cols() {
        if let Some(v) = log_d2_gram(a) {
            return Ok(v);
        }
    }
    let sv = a.singular_values()?;
    let largest = sv[0];
    if !largest.is_finite() {
        return Err(Error::ModelEvaluation("non-finite Jacobian entry".into()));
    }
    if largest == T::zero() || sv[sv.len() - 1] < T::rank_tolerance() * largest {
        return Ok(T::neg_infinity());
    }
    Ok(sv.iter().map(|s| s.ln()).sum())
}

/// D₂(A) = √det(AᵀA), the product of the singular values of A.
pub fn d2<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    log_d2(a).map(|v| v.exp())
}

/// Binomial coefficient, saturating at `u128::MAX`.
fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// D∞(A) with an explicit enumeration cap.
pub fn d_inf_with_cap<T: Scalar>(a: &Matrix<T>, cap: u64) -> Result<T> {
    check_shape(a)?;
    let (n, p) = (a.rows(), a.cols());
    if p == 0 {
        return Ok(T::one());
    }
    let combinations = binomial(n, p);
    if combinations > cap as u128 {
        return Err(Error::EnumerationCapExceeded { combinations, cap });
    }
    let mut idx: Vec<usize> = (0..p).collect();
    let mut minor = vec![T::zero(); p * p];
    let mut total = T::zero();
    loop {
        for (r, &i) in idx.iter().enumerate() {
            minor[r * p..(r + 1) * p].copy_from_slice(a.row(i));
        }
        total += determinant(&minor, p).abs();
        // next combination in lexicographic order
        let mut j = p;
        loop {
            if j == 0 {
                return Ok(total);
            }
            j -= 1;
            if idx[j] != j + n - p {
                break;
            }
            if j == 0 {
                return Ok(total);
            }
        }
        idx[j] += 1;
        for k in (j + 1)..p {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

/// D∞(A) = Σᵢ |det(Aᵢ)| over all p-row submatrices, refusing above
/// [`DEFAULT_ENUMERATION_CAP`] minors.
pub fn d_inf<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    d_inf_with_cap(a, DEFAULT_ENUMERATION_CAP)
}

/// log J for the chosen norm.
pub fn log_d_norm<T: Scalar>(a: &Matrix<T>, norm: DNorm) -> Result<T> {
    match norm {
        DNorm::D2 => log_d2(a),
        DNorm::DInf => d_inf(a).map(|v| v.ln()),
    }
}

/// Unnormalized log generalized fiducial density of θ given one data block:
/// `log f(y_k; θ) + log J(y_k, θ)`.
///
/// Returns `-inf` (not an error) outside the model support.
pub fn log_fiducial_density<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    subset: &DataSubset<T>,
    theta: &[T],
    norm: DNorm,
) -> Result<T> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, model {} expects {}",
            theta.len(),
            model.name(),
            model.dim()
        )));
    }
    if !model.in_support(theta) {
        return Ok(T::neg_infinity());
    }
    let (ll, lj) = model.log_likelihood_and_jacobian(&subset.observations, theta, norm)?;
    if ll == T::neg_infinity() {
        return Ok(ll);
    }
    if ll.is_nan() || lj.is_nan() {
        return Err(Error::ModelEvaluation(format!(
            "{} produced NaN at theta = {:?}",
            model.name(),
            theta
        )));
    }
    if lj == T::neg_infinity() {
        return Ok(lj);
    }
    Ok(ll + lj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn d2_examples() {
        assert!((d2(&m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]])).unwrap() - 1.0).abs() < 1e-14);
        // det(AᵀA) = 35*56 - 44^2 = 24
        assert!((d2(&m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]])).unwrap() - 24f64.sqrt()).abs() < 1e-12);
        assert!((d2(&m(&[&[2.0, 0.0], &[0.0, 3.0]])).unwrap() - 6.0).abs() < 1e-13);
    }

    #[test]
    fn d_inf_examples() {
        assert_eq!(d_inf(&m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]])).unwrap(), 1.0);
        // minors: (1,2) -> -2, (1,3) -> -4, (2,3) -> -2
        assert!((d_inf(&m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]])).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(d_inf(&m(&[&[5.0]])).unwrap(), 5.0);
    }

    #[test]
    fn underdetermined_and_cap_errors() {
        let a = m(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(d2(&a), Err(Error::UnderdeterminedJacobian { rows: 1, cols: 3 })));
        assert!(matches!(d_inf(&a), Err(Error::UnderdeterminedJacobian { .. })));
        let big = Matrix::<f64>::zeros(200, 4);
        let err = d_inf(&big).unwrap_err();
        assert!(matches!(err, Error::EnumerationCapExceeded { .. }));
        assert!(err.to_string().contains("D2"));
        assert!(d_inf_with_cap(&Matrix::<f64>::identity(3), 1).is_ok());
    }

    #[test]
    fn rank_deficient_is_zero() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0], &[-1.0, -2.0]]);
        assert_eq!(d2(&a).unwrap(), 0.0);
        assert_eq!(log_d2(&a).unwrap(), f64::NEG_INFINITY);
        assert_eq!(d2(&Matrix::<f64>::zeros(4, 2)).unwrap(), 0.0);
    }

    #[test]
    fn f32_norms() {
        let a = Matrix::from_rows(&[[1.0_f32, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert!((d2(&a).unwrap() - 24f32.sqrt()).abs() < 1e-4);
        assert!((d_inf(&a).unwrap() - 8.0).abs() < 1e-4);
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix<f64>> {
        (1usize..4, 0usize..5).prop_flat_map(|(p, extra)| {
            let n = p + extra;
            prop::collection::vec(-3.0f64..3.0, n * p)
                .prop_map(move |d| Matrix::from_row_major(n, p, d).unwrap())
        })
    }

    fn brute_minors(a: &Matrix<f64>) -> Vec<f64> {
        let (n, p) = (a.rows(), a.cols());
        let mut out = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != p {
                continue;
            }
            let rows: Vec<&[f64]> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| a.row(i)).collect();
            let flat: Vec<f64> = rows.concat();
            out.push(determinant(&flat, p));
        }
        out
    }

    proptest! {
        #[test]
        fn scale_equivariance(a in matrix_strategy(), c in -4.0f64..4.0) {
            let p = a.cols() as i32;
            let sa = a.scaled(c);
            let lhs = d2(&sa).unwrap();
            let rhs = c.abs().powi(p) * d2(&a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            let lhs = d_inf(&sa).unwrap();
            let rhs = c.abs().powi(p) * d_inf(&a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn permutation_invariance(a in matrix_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..a.rows()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = a.permute_rows(&perm);
            let (x, y) = (d2(&a).unwrap(), d2(&b).unwrap());
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x));
            let (x, y) = (d_inf(&a).unwrap(), d_inf(&b).unwrap());
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x));
        }

        #[test]
        fn d_inf_dominates_each_minor_and_matches_brute_force(a in matrix_strategy()) {
            let minors = brute_minors(&a);
            let total = d_inf(&a).unwrap();
            let brute: f64 = minors.iter().map(|d| d.abs()).sum();
            prop_assert!((total - brute).abs() <= 1e-10 * (1.0 + brute));
            for d in minors {
                prop_assert!(total + 1e-12 >= d.abs());
            }
        }

        #[test]
        fn d2_matches_gram_determinant(a in matrix_strategy()) {
            // Cauchy–Binet: det(AᵀA) = Σ det(A_i)²
            let gram: f64 = brute_minors(&a).iter().map(|d| d * d).sum();
            let v = d2(&a).unwrap();
            if gram > 1e-8 {
                prop_assert!((v * v - gram).abs() <= 1e-8 * (1.0 + gram));
            }
        }

        #[test]
        fn gram_path_agrees_with_qr(
            p in 1usize..5,
            extra in 0usize..40,
            vals in prop::collection::vec(-3.0f64..3.0, 240),
        ) {
            let n = 4 * p + extra;
            let a = Matrix::from_row_major(n, p, vals[..n * p].to_vec()).unwrap();
            let qr: f64 = a.singular_values().unwrap().iter().map(|s| s.ln()).sum();
            if let Some(g) = log_d2_gram(&a) {
                prop_assert!((g - qr).abs() <= 1e-9 * (1.0 + qr.abs()), "{} vs {}", g, qr);
            }
        }

        #[test]
        fn rank_deficient_iff_zero(a in matrix_strategy(), coef in prop::collection::vec(-2.0f64..2.0, 3)) {
            // force the last column into the span of the others
            let (n, p) = (a.rows(), a.cols());
            let mut b = a.clone();
            for i in 0..n {
                let v: f64 = (0..p - 1).map(|j| coef[j] * a[(i, j)]).sum();
                b[(i, p - 1)] = v;
            }
            prop_assert_eq!(d2(&b).unwrap(), 0.0);
            let gram: f64 = brute_minors(&a).iter().map(|d| d * d).sum();
            if gram > 1e-6 {
                prop_assert!(d2(&a).unwrap() > 0.0);
            }
        }

        #[test]
        fn single_column_norms(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            let a = Matrix::from_row_major(v.len(), 1, v.clone()).unwrap();
            let l2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let l1: f64 = v.iter().map(|x| x.abs()).sum();
            if l2 > 0.0 {
                prop_assert!((d2(&a).unwrap() - l2).abs() <= 1e-12 * (1.0 + l2));
            }
            prop_assert!((d_inf(&a).unwrap() - l1).abs() <= 1e-12 * (1.0 + l1));
        }
    }
}
