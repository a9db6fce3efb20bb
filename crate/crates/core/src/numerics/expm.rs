//! Matrix exponential via scaling-and-squaring with a Padé(13) core,
//! after Higham (2005).

use super::Matrix;
use crate::error::{CoreError, Result};

// Padé(13) coefficients, Higham (2005) eq. (10.33).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

/// exp(M * t) for a square matrix.
pub fn mat_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(CoreError::Dimension(format!(
            "mat_exp needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let a = m * t;
    if n == 1 {
        return Ok(Matrix::from_element(1, 1, a[(0, 0)].exp()));
    }

    let norm = one_norm(&a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = &a / 2f64.powi(squarings as i32);

    let eye = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    // U = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let w1 = &a6 * PADE13[13] + &a4 * PADE13[11] + &a2 * PADE13[9];
    let w2 = &a6 * &w1 + &a6 * PADE13[7] + &a4 * PADE13[5] + &a2 * PADE13[3] + &eye * PADE13[1];
    let u = &a * w2;
    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let z1 = &a6 * PADE13[12] + &a4 * PADE13[10] + &a2 * PADE13[8];
    let v = &a6 * z1 + &a6 * PADE13[6] + &a4 * PADE13[4] + &a2 * PADE13[2] + &eye * PADE13[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| CoreError::Singular("Pade denominator in mat_exp".into()))?;

    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn exp_at_zero_time_is_identity() {
        let m = dmatrix![1.5, -0.3; 0.7, 2.0];
        let e = mat_exp(&m, 0.0).unwrap();
        assert!((e - Matrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn exp_of_zero_matrix_is_identity() {
        let m = Matrix::zeros(3, 3);
        let e = mat_exp(&m, 1.0).unwrap();
        assert!((e - Matrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn exp_of_diagonal_matches_scalar_exponentials() {
        let m = Matrix::from_diagonal(&nalgebra::dvector![2.0, 0.0]);
        let e = mat_exp(&m, 1.0).unwrap();
        assert!((e[(0, 0)] - 2.0_f64.exp()).abs() < 1e-12 * 2.0_f64.exp());
        assert!((e[(1, 1)] - 1.0).abs() < 1e-13);
        assert!(e[(0, 1)].abs() < 1e-14 && e[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn exp_rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(mat_exp(&m, 1.0), Err(CoreError::Dimension(_))));
    }

    #[test]
    fn semigroup_property() {
        let m = dmatrix![0.4, -1.1, 0.2; 0.9, 0.1, -0.5; 0.3, 0.6, -0.2];
        let whole = mat_exp(&m, 1.7).unwrap();
        let part = mat_exp(&m, 0.9).unwrap() * mat_exp(&m, 0.8).unwrap();
        assert!((whole - part).amax() < 1e-10);
    }

    #[test]
    fn large_argument_scaling() {
        // ||M t|| around 40: still accurate thanks to scaling-and-squaring.
        let m = dmatrix![-3.0, 1.0; 0.0, -2.0];
        let e = mat_exp(&m, 10.0).unwrap();
        // Closed form for upper-triangular 2x2 with distinct eigenvalues:
        // exp(t M)[0,1] = (e^{-2t} - e^{-3t}) for the unit coupling.
        let expected = (-20.0_f64).exp() - (-30.0_f64).exp();
        assert!((e[(0, 1)] - expected).abs() < 1e-12 * expected.abs().max(1e-9));
    }
}
