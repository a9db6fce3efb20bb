//! Small dense-matrix helpers on top of nalgebra.

use super::Matrix;
use crate::error::{CoreError, Result};

/// Largest absolute entry of `m - m^T`.
pub fn symmetry_defect(m: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// (m + m^T) / 2.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_finite_matrix(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Inputs with asymmetry below `1e-10` (relative to the largest entry) are
/// symmetrized internally; anything worse is a shape error.
pub fn min_eig(m: &Matrix) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(CoreError::Dimension(format!(
            "min_eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let defect = symmetry_defect(m);
    let tolerance = 1e-10 * scale;
    if defect > tolerance {
        return Err(CoreError::Asymmetry {
            asymmetry: defect,
            tolerance,
        });
    }
    let sym = symmetrize(m);
    let eigs = sym.symmetric_eigenvalues();
    Ok(eigs.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Smallest singular value.
pub fn min_singular_value(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}
