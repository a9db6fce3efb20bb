//! Bundled problem instances used by tests, the CLI examples, and the
//! acceptance suite.

use crate::model::{ModelParams, OffsetFn};
use crate::numerics::{Matrix, Vector};
use nalgebra::{dmatrix, dvector};

/// Two-dimensional reference instance with diagonal A, upper-triangular C0,
/// Q = diag(1, 0.4), R0 = diag(0.1, 2), Gamma = diag(1, 0.5) and G = 0.
/// Control channels are disabled (B = D = D0 = 0, R = 1).
///
/// The horizon is 0.25: the uniform-convexity Riccati solution for these
/// coefficients escapes to the K + R0 boundary near t = T - 0.5, so longer
/// horizons are exactly the regime the certificates flag as not certified.
pub fn reference_instance() -> ModelParams {
    ModelParams {
        n: 2,
        r: 1,
        a: dmatrix![2.0, 0.0; 0.0, 0.0],
        b: Matrix::zeros(2, 1),
        d: Matrix::zeros(2, 1),
        c0: dmatrix![3.0, 1.0; 0.0, 2.0],
        d0: Matrix::zeros(2, 1),
        q: dmatrix![1.0, 0.0; 0.0, 0.4],
        r_control: Matrix::identity(1, 1),
        r0: dmatrix![0.1, 0.0; 0.0, 2.0],
        g: Matrix::zeros(2, 2),
        gamma: dmatrix![1.0, 0.0; 0.0, 0.5],
        gamma0: Matrix::zeros(2, 2),
        f: OffsetFn::zero(2),
        sigma: OffsetFn::zero(2),
        eta: OffsetFn::zero(2),
        eta0: Vector::zeros(2),
        x0: dvector![1.0, 1.0],
        horizon: 0.25,
    }
}

/// Reference instance with all control channels enabled: B = D = D0 = I,
/// R = I (r = n = 2), used by solver cross-method tests.
pub fn reference_instance_controlled() -> ModelParams {
    let mut p = reference_instance();
    p.r = 2;
    p.b = Matrix::identity(2, 2);
    p.d = Matrix::identity(2, 2);
    p.d0 = Matrix::identity(2, 2);
    p.r_control = Matrix::identity(2, 2);
    p
}

/// Benchmark scenario for convergence studies: every channel active, offsets
/// nonzero, well inside the certification margins.
pub fn benchmark_instance() -> ModelParams {
    ModelParams {
        n: 2,
        r: 2,
        a: dmatrix![0.3, 0.1; 0.0, -0.2],
        b: Matrix::identity(2, 2),
        d: dmatrix![0.2, 0.0; 0.0, 0.2],
        c0: dmatrix![0.2, 0.05; 0.0, 0.15],
        d0: dmatrix![0.1, 0.0; 0.0, 0.1],
        q: dmatrix![1.0, 0.0; 0.0, 0.6],
        r_control: Matrix::identity(2, 2),
        r0: dmatrix![2.0, 0.0; 0.0, 2.0],
        g: dmatrix![0.5, 0.0; 0.0, 0.3],
        gamma: dmatrix![0.5, 0.0; 0.0, 0.3],
        gamma0: dmatrix![0.2, 0.0; 0.0, 0.2],
        f: OffsetFn::Constant(dvector![0.05, 0.0]),
        sigma: OffsetFn::Constant(dvector![0.1, 0.05]),
        eta: OffsetFn::Constant(dvector![0.2, -0.1]),
        eta0: dvector![0.1, 0.0],
        x0: dvector![1.0, -0.5],
        horizon: 1.0,
    }
}

/// Scalar instance (n = r = 1) with every channel active; small enough for
/// exact tree computations at N = 2.
pub fn scalar_instance() -> ModelParams {
    ModelParams {
        n: 1,
        r: 1,
        a: dmatrix![0.4],
        b: dmatrix![1.0],
        d: dmatrix![0.25],
        c0: dmatrix![0.3],
        d0: dmatrix![0.2],
        q: dmatrix![1.0],
        r_control: dmatrix![1.0],
        r0: dmatrix![2.5],
        g: dmatrix![0.5],
        gamma: dmatrix![0.4],
        gamma0: dmatrix![0.3],
        f: OffsetFn::Constant(dvector![0.1]),
        sigma: OffsetFn::Constant(dvector![0.15]),
        eta: OffsetFn::Constant(dvector![0.2]),
        eta0: dvector![0.1],
        x0: dvector![0.8],
        horizon: 1.0,
    }
}
