//! Projection onto the cone of positive semi-definite matrices.

use nalgebra::SymmetricEigen;

use crate::linalg::DenseMatrix;
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Frobenius-nearest PSD matrix: eigendecomposition with the negative
/// eigenvalues clipped to zero. The input is symmetrized first.
pub fn psd_projection(h: &DenseMatrix) -> Result<DenseMatrix> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: h.ncols(),
        });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hessian"));
    }
    let asym = (h - h.transpose()).amax();
    if asym > SYMMETRY_TOL * h.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(Error::EigenFailure)?;
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let out = q * DenseMatrix::from_diagonal(&clipped) * q.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// Largest eigenvalue of a symmetric PSD matrix (0 for the empty case).
pub fn max_eigenvalue(h: &DenseMatrix) -> Result<f64> {
    if h.is_empty() {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::try_new((h + h.transpose()) * 0.5, f64::EPSILON, 0)
        .ok_or(Error::EigenFailure)?;
    Ok(eig.eigenvalues.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clips_negative_eigenvalues() {
        let h = DenseMatrix::from_diagonal(&dvector![2.0, -3.0]);
        let p = psd_projection(&h).unwrap();
        assert!((p - DenseMatrix::from_diagonal(&dvector![2.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn psd_input_is_a_fixed_point() {
        let h = DenseMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!((psd_projection(&h).unwrap() - &h).amax() < 1e-12);
    }

    #[test]
    fn off_diagonal_example() {
        // eigenpairs: 1 with (1,1)/sqrt2, -1 with (1,-1)/sqrt2
        let h = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = psd_projection(&h).unwrap();
        assert!((p - DenseMatrix::from_element(2, 2, 0.5)).amax() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let h = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(psd_projection(&h).is_err());
        assert!(psd_projection(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn nearest_psd_against_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let h = DenseMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let p = psd_projection(&h).unwrap();
            let eig = SymmetricEigen::new(p.clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
            let best = (&p - &h).norm();
            for _ in 0..2000 {
                // random PSD candidate L L^T
                let l = DenseMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
                let cand = &l * l.transpose();
                assert!((cand - &h).norm() >= best - 1e-12);
            }
        }
    }
}
