//! Stand-alone solvers for the two decoupled halves of the limiting system:
//! the conditional-mean pair (xhat, p_hat, beta0) under a given mean control
//! map, and the dual triple (h, y, z) driven by a solved pair.

use super::solution::AffineInMean;
use crate::error::{CoreError, Result};
use crate::model::{DerivedQuantities, ModelParams};
use crate::numerics::{mat_exp, Matrix, TimeGrid, Vector};

/// Mean control as an affine map of xhat, one per step.
#[derive(Debug, Clone)]
pub struct MeanControl {
    pub x: Matrix,
    pub c: Vector,
}

/// Solved (xhat, p_hat, beta0) subsystem: p_hat = S_a xhat + s and the
/// per-step beta0 representation (affine in xhat only).
#[derive(Debug, Clone)]
pub struct LimitPair {
    pub grid: TimeGrid,
    pub s_a: Vec<Matrix>,
    pub s_c: Vec<Vector>,
    pub beta_x: Vec<Matrix>,
    pub beta_c: Vec<Vector>,
}

impl LimitPair {
    pub fn pbar(&self, m: usize, xhat: &Vector) -> Vector {
        &self.s_a[m] * xhat + &self.s_c[m]
    }

    pub fn beta0(&self, m: usize, xhat: &Vector) -> Vector {
        &self.beta_x[m] * xhat + &self.beta_c[m]
    }
}

/// Backward sweep for the conditional-mean pair under a fixed mean control.
pub fn solve_limit_pair(
    p: &ModelParams,
    d: &DerivedQuantities,
    control: &[MeanControl],
    grid: &TimeGrid,
) -> Result<LimitPair> {
    let steps = grid.steps();
    if control.len() != steps {
        return Err(CoreError::Dimension(format!(
            "need {steps} control maps, got {}",
            control.len()
        )));
    }
    let n = p.n;
    let dt = grid.dt();
    let eye = Matrix::identity(n, n);
    let a_fwd = &eye + &p.a * dt;
    let a_adj = &eye + p.a.transpose() * dt;
    let r0_inv = p
        .r0
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::Singular("R0".into()))?;
    let q_minus_xi1 = &p.q - &d.xi1;

    let mut s_a = vec![Matrix::zeros(n, n); steps + 1];
    let mut s_c = vec![Vector::zeros(n); steps + 1];
    s_a[steps] = &d.xi1_g - &p.g;
    s_c[steps] = d.xi2_g.clone();
    let mut beta_x = vec![Matrix::zeros(n, n); steps];
    let mut beta_c = vec![Vector::zeros(n); steps];

    for m in (0..steps).rev() {
        let t = grid.node(m);
        let f_m = p.f.eval(t);
        let xi2_m = d.xi2(p, t);
        let sa_next = s_a[m + 1].clone();
        let sc_next = s_c[m + 1].clone();

        // beta0 = Sa' (C0 xhat + D0 u - R0^{-1} beta0): implicit in beta0.
        let sys = &eye + &sa_next * &r0_inv;
        let lu = sys.lu();
        let bx = lu
            .solve(&(&sa_next * (&p.c0 + &p.d0 * &control[m].x)))
            .ok_or_else(|| CoreError::Breakdown {
                node: m,
                time: t,
                what: "I + S_a R0^{-1} singular".into(),
            })?;
        let bc: Vector = lu
            .solve(&(&sa_next * &p.d0 * &control[m].c))
            .ok_or_else(|| CoreError::Breakdown {
                node: m,
                time: t,
                what: "I + S_a R0^{-1} singular".into(),
            })?;

        s_a[m] = &a_adj * &sa_next * (&a_fwd + &p.b * &control[m].x * dt)
            + (p.c0.transpose() * &bx - &q_minus_xi1) * dt;
        s_c[m] = &a_adj * (&sa_next * (&p.b * &control[m].c * dt + &f_m * dt) + &sc_next)
            + (p.c0.transpose() * &bc + &xi2_m) * dt;
        beta_x[m] = bx;
        beta_c[m] = bc;
    }
    Ok(LimitPair {
        grid: grid.clone(),
        s_a,
        s_c,
        beta_x,
        beta_c,
    })
}

/// Solved (h, y, z) subsystem driven by a limit pair: y affine in (xhat, h)
/// and per-step (z, g2) representations.
#[derive(Debug, Clone)]
pub struct HyzSolution {
    pub grid: TimeGrid,
    pub y: Vec<AffineInMean>,
    pub z: Vec<AffineInMean>,
    pub g2: Vec<AffineInMean>,
}

/// Backward sweep for the dual triple, given the mean control map and the
/// beta0 representation of a solved limit pair.
pub fn solve_hyz(
    p: &ModelParams,
    d: &DerivedQuantities,
    control: &[MeanControl],
    pair: &LimitPair,
    grid: &TimeGrid,
) -> Result<HyzSolution> {
    let steps = grid.steps();
    let n = p.n;
    let dt = grid.dt();
    let eye = Matrix::identity(n, n);
    let a_fwd = &eye + &p.a * dt;
    let a_adj = &eye + p.a.transpose() * dt;
    let r0_inv = p
        .r0
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::Singular("R0".into()))?;
    let gx = &d.g_minus_xi1g;
    let theta_bar = p.a.transpose() * gx + gx * &p.a;
    let c0t_gx = p.c0.transpose() * gx;
    let q_minus_xi1 = &p.q - &d.xi1;
    let ig_r0_inv = &d.ig * &r0_inv;
    let ig_c0 = &d.ig * &p.c0;

    let mut y = vec![AffineInMean::zeros(n, n); steps + 1];
    y[steps] = AffineInMean {
        x: gx.clone(),
        h: Matrix::zeros(n, n),
        c: -&d.xi2_g,
    };
    let mut z = vec![AffineInMean::zeros(n, n); steps];
    let mut g2 = vec![AffineInMean::zeros(n, n); steps];

    for m in (0..steps).rev() {
        let t = grid.node(m);
        let f_m = p.f.eval(t);
        let xi2_m = d.xi2(p, t);
        let next = y[m + 1].clone();

        // Joint solve for (z, g2) at this node:
        //   z  = Ya' (C0 xhat + D0 u - R0inv beta0) + Yb' g2
        //   g2 = IG C0 h + IG R0inv (z + beta0).
        let diff_x = &p.c0 + &p.d0 * &control[m].x - &r0_inv * &pair.beta_x[m];
        let diff_c = &p.d0 * &control[m].c - &r0_inv * &pair.beta_c[m];
        let mut sys = Matrix::zeros(2 * n, 2 * n);
        sys.view_mut((0, 0), (n, n)).copy_from(&eye);
        sys.view_mut((0, n), (n, n)).copy_from(&(-&next.h));
        sys.view_mut((n, 0), (n, n)).copy_from(&(-&ig_r0_inv));
        sys.view_mut((n, n), (n, n)).copy_from(&eye);
        let mut rhs = Matrix::zeros(2 * n, 2 * n + 1);
        rhs.view_mut((0, 0), (n, n)).copy_from(&(&next.x * &diff_x));
        rhs.view_mut((0, 2 * n), (n, 1)).copy_from(&Matrix::from_column_slice(
            n,
            1,
            (&next.x * &diff_c).as_slice(),
        ));
        rhs.view_mut((n, n), (n, n)).copy_from(&ig_c0);
        rhs.view_mut((n, 0), (n, n))
            .copy_from(&(&ig_r0_inv * &pair.beta_x[m]));
        rhs.view_mut((n, 2 * n), (n, 1)).copy_from(&Matrix::from_column_slice(
            n,
            1,
            (&ig_r0_inv * &pair.beta_c[m]).as_slice(),
        ));
        let sol = sys.lu().solve(&rhs).ok_or_else(|| CoreError::Breakdown {
            node: m,
            time: t,
            what: "(z, g2) node system singular".into(),
        })?;
        let z_m = AffineInMean {
            x: sol.view((0, 0), (n, n)).into(),
            h: sol.view((0, n), (n, n)).into(),
            c: sol.view((0, 2 * n), (n, 1)).column(0).into(),
        };
        let g_m = AffineInMean {
            x: sol.view((n, 0), (n, n)).into(),
            h: sol.view((n, n), (n, n)).into(),
            c: sol.view((n, 2 * n), (n, 1)).column(0).into(),
        };

        // y update.
        let ey_x = &next.x * (&a_fwd + &p.b * &control[m].x * dt);
        let ey_h = &next.h * &a_fwd;
        let ey_c = &next.x * (&p.b * &control[m].c * dt + &f_m * dt) + &next.c;
        y[m] = AffineInMean {
            x: &a_adj * ey_x + (p.c0.transpose() * &z_m.x + &q_minus_xi1 - &c0t_gx * &g_m.x) * dt,
            h: &a_adj * ey_h
                + (p.c0.transpose() * &z_m.h + &q_minus_xi1 - &theta_bar - &c0t_gx * &g_m.h) * dt,
            c: &a_adj * ey_c + (p.c0.transpose() * &z_m.c - &xi2_m - &c0t_gx * &g_m.c) * dt,
        };
        z[m] = z_m;
        g2[m] = g_m;
    }
    Ok(HyzSolution { grid: grid.clone(), y, z, g2 })
}

/// Continuous-time closed form of the y process for the family C0 = D0 = 0,
/// Gamma0 = 0, mean control zero. There the adjoint channel closes at zero,
/// xhat is the deterministic flow xhat(s) = e^{As} x0 + int e^{A(s-v)} f dv,
/// and y solves y' = -A^T y - (Q - Xi1) xhat + Xi2 with terminal
/// y(T) = G xhat(T) - Xi2G, i.e. exactly the transition form generated by the
/// diagonal blocks e^{At}, e^{-A^T t} of the block transition matrix.
/// Evaluated with matrix exponentials and Simpson quadrature as an
/// independent oracle for `solve_hyz`.
pub fn decoupled_y_closed_form(
    p: &ModelParams,
    d: &DerivedQuantities,
    fine_steps: usize,
) -> Result<Vec<Vector>> {
    let horizon = p.horizon;
    let w = horizon / fine_steps as f64;
    // Exact one-step propagators, computed once.
    let e_half = mat_exp(&p.a, 0.5 * w)?;
    let et_half = mat_exp(&p.a.transpose(), 0.5 * w)?;
    let et_full = mat_exp(&p.a.transpose(), w)?;

    // Forward at half resolution so midpoints are exact nodes:
    // xhat(s + h) = e^{Ah} xhat(s) + int_0^h e^{Av} f(s + h - v) dv, Simpson.
    let h = 0.5 * w;
    let e_quarter = mat_exp(&p.a, 0.5 * h)?;
    let mut xhalf = Vec::with_capacity(2 * fine_steps + 1);
    xhalf.push(p.x0.clone());
    for k in 0..(2 * fine_steps) {
        let s = h * k as f64;
        let src = (&e_half * p.f.eval(s) + &e_quarter * p.f.eval(s + 0.5 * h) * 4.0
            + p.f.eval(s + h))
            * (h / 6.0);
        xhalf.push(&e_half * &xhalf[k] + src);
    }

    // Backward: y(s) = e^{A^T w} y(s + w) - int_s^{s+w} e^{A^T (tau - s)} r(tau) dtau
    // with r(tau) = -(Q - Xi1) xhat(tau) + Xi2(tau), Simpson on the source.
    let q_minus_xi1 = &p.q - &d.xi1;
    let r_at = |s: f64, x: &Vector| -(&q_minus_xi1 * x) + d.xi2(p, s);
    let mut y = vec![Vector::zeros(p.n); fine_steps + 1];
    y[fine_steps] = &p.g * &xhalf[2 * fine_steps] - &d.xi2_g;
    for k in (0..fine_steps).rev() {
        let s = w * k as f64;
        let src = (r_at(s, &xhalf[2 * k])
            + &et_half * r_at(s + 0.5 * w, &xhalf[2 * k + 1]) * 4.0
            + &et_full * r_at(s + w, &xhalf[2 * k + 2]))
            * (w / 6.0);
        y[k] = &et_full * &y[k + 1] - src;
    }
    Ok(y)
}
