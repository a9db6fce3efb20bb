//! Classical 4th-order Runge-Kutta for terminal-value matrix ODEs on the
//! shared uniform grid.

use super::{is_finite_matrix, Matrix, MatrixPath, TimeGrid};
use crate::error::{CoreError, Result};

/// Integrate dK/dt = rhs(t, K) backward from K(T) = `terminal`, filling every
/// grid node. The rhs may fail (e.g. a Riccati inverse breaking down); the
/// failure is reported with the node being computed.
pub fn integrate_backward_ode<F>(rhs: F, terminal: &Matrix, grid: &TimeGrid) -> Result<MatrixPath>
where
    F: Fn(f64, &Matrix) -> Result<Matrix>,
{
    let steps = grid.steps();
    let dt = grid.dt();
    let mut values = vec![Matrix::zeros(terminal.nrows(), terminal.ncols()); steps + 1];
    values[steps] = terminal.clone();

    let mut current = terminal.clone();
    for m in (0..steps).rev() {
        let t1 = grid.node(m + 1);
        let h = -dt;
        let at = |t: f64, k: &Matrix| -> Result<Matrix> {
            rhs(t, k).map_err(|e| locate(e, m, grid.node(m)))
        };
        let k1 = at(t1, &current)?;
        let k2 = at(t1 + 0.5 * h, &(&current + &k1 * (0.5 * h)))?;
        let k3 = at(t1 + 0.5 * h, &(&current + &k2 * (0.5 * h)))?;
        let k4 = at(t1 + h, &(&current + &k3 * h))?;
        current += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !is_finite_matrix(&current) {
            return Err(CoreError::NonFinite {
                node: m,
                time: grid.node(m),
            });
        }
        values[m] = current.clone();
    }
    MatrixPath::new(grid.clone(), values)
}

fn locate(e: CoreError, node: usize, time: f64) -> CoreError {
    match e {
        CoreError::Breakdown { what, .. } => CoreError::Breakdown { node, time, what },
        CoreError::Singular(what) => CoreError::Breakdown { node, time, what },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_keeps_terminal() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let g = nalgebra::dmatrix![1.0, 0.2; 0.2, 3.0];
        let path = integrate_backward_ode(|_, _| Ok(Matrix::zeros(2, 2)), &g, &grid).unwrap();
        for v in &path.values {
            assert!((v - &g).amax() < 1e-15);
        }
    }

    #[test]
    fn linear_integral() {
        // k' = -1, k(1) = 0  =>  k(0) = 1.
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let path = integrate_backward_ode(
            |_, _| Ok(Matrix::from_element(1, 1, -1.0)),
            &Matrix::zeros(1, 1),
            &grid,
        )
        .unwrap();
        assert!((path.initial()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_exponential_decay() {
        // k' = -2k, k(1) = 1  =>  k(0) = e^2.
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let path = integrate_backward_ode(
            |_, k| Ok(k * -2.0),
            &Matrix::from_element(1, 1, 1.0),
            &grid,
        )
        .unwrap();
        let expected = 2.0_f64.exp();
        assert!((path.initial()[(0, 0)] - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn fourth_order_convergence() {
        // Halving the step shrinks the terminal-evaluated error ~16x.
        let solve = |steps: usize| {
            let grid = TimeGrid::new(1.0, steps).unwrap();
            integrate_backward_ode(|t, k| Ok(k * (-2.0 * t.cos())), &Matrix::from_element(1, 1, 1.0), &grid)
                .unwrap()
                .initial()[(0, 0)]
        };
        // Exact: k(0) = exp(2 sin(1)).
        let exact = (2.0 * 1.0_f64.sin()).exp();
        let e1 = (solve(16) - exact).abs();
        let e2 = (solve(32) - exact).abs();
        let ratio = e1 / e2;
        assert!(ratio > 10.0 && ratio < 24.0, "ratio {ratio}");
    }

    #[test]
    fn blow_up_reports_first_bad_node() {
        // k' = -50 k^2 with k(1) = 1: 1/k(t) = 1 - 50(1-t) crosses zero at
        // t = 0.98, so the backward sweep overflows almost immediately.
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let res = integrate_backward_ode(
            |_, k| {
                let v = k[(0, 0)];
                Ok(Matrix::from_element(1, 1, -v * v * 50.0))
            },
            &Matrix::from_element(1, 1, 1.0),
            &grid,
        );
        match res {
            Err(CoreError::NonFinite { node, .. }) => assert!(node < 32),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let run = || {
            integrate_backward_ode(
                |t, k| Ok(k * (-1.3 * t) + Matrix::identity(2, 2) * 0.1),
                &nalgebra::dmatrix![0.5, 0.0; 0.0, 2.0],
                &grid,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_eq!(x, y);
        }
    }
}
