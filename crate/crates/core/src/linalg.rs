//! Small shared linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub(crate) fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))
}

/// Least squares that also reports the numerical rank of the design
/// matrix, so callers can reject underdetermined fits.
pub(crate) fn least_squares_ranked(
    a: DMatrix<f64>,
    b: DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(1.0))
        .count();
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    Ok((x, rank))
}

/// Matrix exponential by scaling and squaring with a Taylor series.
pub(crate) fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=60 {
        term = (&term * &scaled) / k as f64;
        sum += &term;
        if term.norm() <= 1e-14 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn least_squares_solves_exact_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_column_slice(&[5.0, 10.0]);
        let x = least_squares(a, b).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn ranked_solve_flags_singular_designs() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let (_, rank) = least_squares_ranked(a, b).unwrap();
        assert_eq!(rank, 1);
    }

    #[test]
    fn expm_matches_scalar_exponential() {
        let m = DMatrix::from_row_slice(1, 1, &[-0.73]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], (-0.73f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn expm_of_nilpotent_matrix_is_exact() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(0, 1)], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_semigroup_property_holds() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.4, 0.2, 0.1, -0.6]);
        let once = expm(&(&m * 2.0));
        let half = expm(&m);
        let twice = &half * &half;
        assert!((once - twice).norm() < 1e-12);
    }
}
