//! Agent-level backward variables along a simulated path, and evaluators for
//! the representative agent's auxiliary cost (exact moment propagation and
//! Monte Carlo).

use super::solution::{simulate_meanfield, ConsistencySolution, MeanFieldPath};
use crate::numerics::{Matrix, RandomStreams, StreamPurpose, Vector};

/// Backward variables and strategy values of one agent along a path.
#[derive(Debug, Clone)]
pub struct AgentBackwardPath {
    /// Costate k_i at every node (length steps + 1).
    pub k: Vec<Vector>,
    /// Common-noise adjoint diffusion, one per step.
    pub zeta0: Vec<Vector>,
    /// Idiosyncratic adjoint diffusion, one per step.
    pub zeta_i: Vec<Vector>,
    /// Strategy values, one per step.
    pub control: Vec<Vector>,
}

/// Evaluate (k_i, zeta0, zeta_i) and the strategy along a simulated agent
/// path. The adjoint diffusions come from the structural conditional
/// expectations `E_m[k_{m+1} dW]/dt` of the affine representation.
pub fn agent_bsde(
    cs: &ConsistencySolution,
    mf: &MeanFieldPath,
    x_path: &[Vector],
) -> AgentBackwardPath {
    let steps = cs.steps();
    assert_eq!(x_path.len(), steps + 1, "agent path must cover all nodes");
    let p = &cs.params;
    let r0_inv = p.r0.clone().lu().try_inverse().expect("R0 invertible");
    let mut k = Vec::with_capacity(steps + 1);
    let mut zeta0 = Vec::with_capacity(steps);
    let mut zeta_i = Vec::with_capacity(steps);
    let mut control = Vec::with_capacity(steps);
    for m in 0..=steps {
        k.push(cs.values[m].k.eval(&x_path[m], &mf.xhat[m], &mf.h[m]));
    }
    for m in 0..steps {
        let t = cs.grid.node(m);
        let (xhat, h) = (&mf.xhat[m], &mf.h[m]);
        let u = cs.strategy(m, &x_path[m], xhat, h);
        let next = &cs.values[m + 1];
        let beta0 = cs.beta0(m, xhat, h);
        let g2 = cs.g2(m, xhat, h);
        let agent_diff = &p.c0 * &x_path[m] + &p.d0 * &u - &r0_inv * &beta0;
        let mean_diff = cs.mean_diffusion(m, xhat, h);
        zeta0.push(&next.k.xi * agent_diff + &next.k.x * mean_diff + &next.k.h * g2);
        zeta_i.push(&next.k.xi * (&p.d * &u + p.sigma.eval(t)));
        control.push(u);
    }
    AgentBackwardPath {
        k,
        zeta0,
        zeta_i,
        control,
    }
}

/// Simulate one agent's state under the decentralized strategy along the
/// given mean-field path, using the supplied idiosyncratic increments.
pub fn simulate_agent(
    cs: &ConsistencySolution,
    mf: &MeanFieldPath,
    dwi: &[f64],
) -> Vec<Vector> {
    let steps = cs.steps();
    let p = &cs.params;
    let dt = cs.grid.dt();
    let r0_inv = p.r0.clone().lu().try_inverse().expect("R0 invertible");
    let mut x = Vec::with_capacity(steps + 1);
    x.push(p.x0.clone());
    for m in 0..steps {
        let t = cs.grid.node(m);
        let u = cs.strategy(m, &x[m], &mf.xhat[m], &mf.h[m]);
        let beta0 = cs.beta0(m, &mf.xhat[m], &mf.h[m]);
        let drift = &p.a * &x[m] + &p.b * &u + p.f.eval(t);
        let idio = &p.d * &u + p.sigma.eval(t);
        let common = &p.c0 * &x[m] + &p.d0 * &u - &r0_inv * &beta0;
        x.push(&x[m] + drift * dt + idio * dwi[m] + common * mf.dw0[m]);
    }
    x
}

/// Additive control perturbation: u_i(m) += amplitude * direction(m).
pub struct ControlPerturbation<'a> {
    pub direction: &'a [Vector],
    pub amplitude: f64,
}

/// Exact expectation of the representative agent's auxiliary cost under the
/// decentralized strategy (optionally perturbed), by propagating the joint
/// second moment of (x_i, xhat, h, 1) through the discrete dynamics.
///
/// Only the agent's own control is perturbed; the mean-field inputs stay at
/// the solved consistency values, which is exactly the person-by-person
/// variation the auxiliary problem encodes.
pub fn aux_cost_exact(cs: &ConsistencySolution, perturb: Option<ControlPerturbation>) -> f64 {
    let p = &cs.params;
    let d = &cs.derived;
    let n = p.n;
    let steps = cs.steps();
    let dt = cs.grid.dt();
    let dim = 3 * n + 1;
    let r0_inv = p.r0.clone().lu().try_inverse().expect("R0 invertible");
    let gx = &d.g_minus_xi1g;
    let theta_bar = p.a.transpose() * gx + gx * &p.a;
    let q_minus_xi1 = &p.q - &d.xi1;

    // Selectors into the augmented state (x_i, xhat, h, 1).
    let sel = |offset: usize| -> Matrix {
        let mut m = Matrix::zeros(n, dim);
        m.view_mut((0, offset), (n, n))
            .copy_from(&Matrix::identity(n, n));
        m
    };
    let sel_xi = sel(0);
    let sel_xh = sel(n);
    let sel_h = sel(2 * n);
    let mut sel_one = Matrix::zeros(1, dim);
    sel_one[(0, 3 * n)] = 1.0;

    // Initial second moment: deterministic start (x0, x0, 0, 1).
    let mut state0 = Vector::zeros(dim);
    state0.rows_mut(0, n).copy_from(&p.x0);
    state0.rows_mut(n, n).copy_from(&p.x0);
    state0[3 * n] = 1.0;
    let mut smom = &state0 * state0.transpose();

    let mut total = 0.0;
    for m in 0..steps {
        let t = cs.grid.node(m);
        let c = &cs.coeffs[m];
        let u_mean_x = &c.u.xi + &c.u.x;
        let f_m = p.f.eval(t);
        let sigma_m = p.sigma.eval(t);
        let xi2_m = d.xi2(p, t);

        // Control map over the augmented state (perturbation on the agent).
        let mut u_map = Matrix::zeros(p.r, dim);
        u_map.view_mut((0, 0), (p.r, n)).copy_from(&c.u.xi);
        u_map.view_mut((0, n), (p.r, n)).copy_from(&c.u.x);
        u_map.view_mut((0, 2 * n), (p.r, n)).copy_from(&c.u.h);
        let mut u_const = c.u.c.clone();
        if let Some(ref pert) = perturb {
            u_const += &pert.direction[m] * pert.amplitude;
        }
        u_map
            .view_mut((0, 3 * n), (p.r, 1))
            .copy_from(&Matrix::from_column_slice(p.r, 1, u_const.as_slice()));

        // Unperturbed mean control map (the population does not deviate).
        let mut um_map = Matrix::zeros(p.r, dim);
        um_map.view_mut((0, n), (p.r, n)).copy_from(&u_mean_x);
        um_map.view_mut((0, 2 * n), (p.r, n)).copy_from(&c.u.h);
        um_map
            .view_mut((0, 3 * n), (p.r, 1))
            .copy_from(&Matrix::from_column_slice(p.r, 1, c.u.c.as_slice()));

        // beta0 and g2 maps over the augmented state.
        let affine_map = |a: &super::solution::AffineInMean| -> Matrix {
            let mut m = Matrix::zeros(n, dim);
            m.view_mut((0, n), (n, n)).copy_from(&a.x);
            m.view_mut((0, 2 * n), (n, n)).copy_from(&a.h);
            m.view_mut((0, 3 * n), (n, 1))
                .copy_from(&Matrix::from_column_slice(n, 1, a.c.as_slice()));
            m
        };
        let beta_map = affine_map(&c.beta0);
        let g2_map = affine_map(&c.g2);

        // Deterministic transition of the augmented state.
        let mut trans = Matrix::zeros(dim, dim);
        trans
            .view_mut((0, 0), (n, dim))
            .copy_from(&(&sel_xi + (&p.a * &sel_xi + &p.b * &u_map) * dt));
        trans
            .view_mut((n, 0), (n, dim))
            .copy_from(&(&sel_xh + (&p.a * &sel_xh + &p.b * &um_map) * dt));
        trans
            .view_mut((2 * n, 0), (n, dim))
            .copy_from(&(&sel_h + (&p.a * &sel_h) * dt));
        trans.view_mut((3 * n, 0), (1, dim)).copy_from(&sel_one);
        let mut f_shift = Matrix::zeros(dim, dim);
        // f enters through the 1-component.
        f_shift
            .view_mut((0, 3 * n), (n, 1))
            .copy_from(&Matrix::from_column_slice(n, 1, (&f_m * dt).as_slice()));
        f_shift
            .view_mut((n, 3 * n), (n, 1))
            .copy_from(&Matrix::from_column_slice(n, 1, (&f_m * dt).as_slice()));
        let trans = trans + f_shift;

        // Common-noise map.
        let mut w0 = Matrix::zeros(dim, dim);
        w0.view_mut((0, 0), (n, dim)).copy_from(
            &(&p.c0 * &sel_xi + &p.d0 * &u_map - &r0_inv * &beta_map),
        );
        w0.view_mut((n, 0), (n, dim)).copy_from(
            &(&p.c0 * &sel_xh + &p.d0 * &um_map - &r0_inv * &beta_map),
        );
        w0.view_mut((2 * n, 0), (n, dim)).copy_from(&g2_map);

        // Idiosyncratic map (agent row only).
        let mut wi = Matrix::zeros(dim, dim);
        let mut idio = &p.d * &u_map;
        idio.view_mut((0, 3 * n), (n, 1))
            .copy_from(&Matrix::from_column_slice(
                n,
                1,
                (&p.d * &u_const + &sigma_m).as_slice(),
            ));
        // Overwrite the 1-column with the full constant (D u_const + sigma).
        wi.view_mut((0, 0), (n, dim)).copy_from(&idio);

        // Stage cost: E[l(x_i, u)] dt via trace pairings against the moment.
        let pair = |a: &Matrix, b: &Matrix| (a.transpose() * b * &smom).trace();
        let xi2_map = Matrix::from_column_slice(n, 1, xi2_m.as_slice()) * &sel_one;
        let mut stage = 0.5 * pair(&sel_xi, &(&p.q * &sel_xi));
        stage += 0.5 * pair(&u_map, &(&p.r_control * &u_map));
        stage -= pair(&sel_xi, &(&d.xi1 * &sel_xh + xi2_map));
        stage += pair(&sel_xi, &(&q_minus_xi1 * &sel_h));
        stage += pair(
            &sel_xi,
            &(&theta_bar * &sel_h + p.c0.transpose() * gx * &g2_map),
        );
        stage += pair(
            &u_map,
            &(p.b.transpose() * gx * &sel_h + p.d0.transpose() * gx * &g2_map),
        );
        total += stage * dt;

        // Advance the second moment.
        smom = &trans * &smom * trans.transpose()
            + (&w0 * &smom * w0.transpose() + &wi * &smom * wi.transpose()) * dt;
    }

    // Terminal cost.
    let pair = |a: &Matrix, b: &Matrix| (a.transpose() * b * &smom).trace();
    let xi2g_map = Matrix::from_column_slice(n, 1, d.xi2_g.as_slice()) * &sel_one;
    let mut terminal = 0.5 * pair(&sel_xi, &(&p.g * &sel_xi));
    terminal -= pair(&sel_xi, &(&d.xi1_g * &sel_xh + xi2g_map));
    total + terminal
}

/// Monte Carlo estimate of the same auxiliary cost; returns (mean, standard
/// error).
pub fn aux_cost_monte_carlo(
    cs: &ConsistencySolution,
    perturb: Option<ControlPerturbation>,
    paths: usize,
    seed: u64,
) -> (f64, f64) {
    let p = &cs.params;
    let d = &cs.derived;
    let steps = cs.steps();
    let dt = cs.grid.dt();
    let streams = RandomStreams::new(seed);
    let r0_inv = p.r0.clone().lu().try_inverse().expect("R0 invertible");
    let gx = &d.g_minus_xi1g;
    let theta_bar = p.a.transpose() * gx + gx * &p.a;
    let q_minus_xi1 = &p.q - &d.xi1;

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for path in 0..paths {
        let dw0: Vec<f64> = (0..steps)
            .map(|m| dt.sqrt() * streams.normal(StreamPurpose::Common, 0, path as u64, m as u64, 0))
            .collect();
        let mf = simulate_meanfield(cs, &dw0);
        let mut x = p.x0.clone();
        let mut cost = 0.0;
        for m in 0..steps {
            let t = cs.grid.node(m);
            let (xhat, h) = (&mf.xhat[m], &mf.h[m]);
            let mut u = cs.strategy(m, &x, xhat, h);
            if let Some(ref pert) = perturb {
                u += &pert.direction[m] * pert.amplitude;
            }
            let g2 = cs.g2(m, xhat, h);
            let beta0 = cs.beta0(m, xhat, h);
            let xi2_m = d.xi2(p, t);
            let stage = 0.5 * (x.transpose() * &p.q * &x)[(0, 0)]
                + 0.5 * (u.transpose() * &p.r_control * &u)[(0, 0)]
                - (&d.xi1 * xhat + &xi2_m).dot(&x)
                + (&q_minus_xi1 * h).dot(&x)
                + (&theta_bar * h + p.c0.transpose() * gx * &g2).dot(&x)
                + (p.b.transpose() * gx * h + p.d0.transpose() * gx * &g2).dot(&u);
            cost += stage * dt;

            let dwi = dt.sqrt()
                * streams.normal(StreamPurpose::Idiosyncratic, 0, path as u64, m as u64, 0);
            let drift = &p.a * &x + &p.b * &u + p.f.eval(t);
            let idio = &p.d * &u + p.sigma.eval(t);
            let common = &p.c0 * &x + &p.d0 * &u - &r0_inv * &beta0;
            x = &x + drift * dt + idio * dwi + common * mf.dw0[m];
        }
        let xt = &mf.xhat[steps];
        cost += 0.5 * (x.transpose() * &p.g * &x)[(0, 0)]
            - (&d.xi1_g * xt + &d.xi2_g).dot(&x);
        sum += cost;
        sum_sq += cost * cost;
    }
    let mean = sum / paths as f64;
    let var = (sum_sq / paths as f64 - mean * mean).max(0.0);
    (mean, (var / paths as f64).sqrt())
}
