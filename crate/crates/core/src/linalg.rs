//! Dense containers and a handful of helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type DenseVector = DVector<f64>;
pub type DenseMatrix = DMatrix<f64>;

pub fn ensure_finite(v: &DenseVector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Reshapes a column-major flat vector into a `rows x cols` matrix.
pub fn as_matrix(v: &[f64], rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_column_slice(rows, cols, v)
}

/// Sequential sum; fixed reduction order for reproducible traces.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &DenseVector, b: &DenseVector) -> f64 {
    (a - b).norm()
}
