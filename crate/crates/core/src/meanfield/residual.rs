//! Independent residual evaluator: re-implements every row of the
//! discretized consistency system verbatim and measures the defect of a
//! solution's representations along simulated common-noise paths.

use super::solution::{simulate_meanfield, ConsistencySolution, ResidualSummary};
use crate::numerics::{Matrix, RandomStreams, StreamPurpose, Vector};
use std::collections::BTreeMap;

pub const DEFAULT_PATHS: usize = 64;

struct Accum {
    sum_sq: f64,
    count: usize,
}

impl Accum {
    fn new() -> Self {
        Self {
            sum_sq: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, defect: &Vector) {
        self.sum_sq += defect.norm_squared();
        self.count += defect.len();
    }

    fn rms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.sum_sq / self.count as f64).sqrt()
        }
    }
}

/// RMS residual of each discretized row over `paths` sampled paths.
pub fn evaluate(cs: &ConsistencySolution, paths: usize, seed: u64) -> ResidualSummary {
    let p = &cs.params;
    let d = &cs.derived;
    let grid = &cs.grid;
    let steps = grid.steps();
    let dt = grid.dt();
    let streams = RandomStreams::new(seed);
    let r0_inv = p.r0.clone().lu().try_inverse().expect("R0 invertible");
    let gx = &d.g_minus_xi1g;
    let theta_bar = p.a.transpose() * gx + gx * &p.a;
    let c0t_gx = p.c0.transpose() * gx;
    let q_minus_xi1 = &p.q - &d.xi1;
    let a_adj = Matrix::identity(p.n, p.n) + p.a.transpose() * dt;

    let mut rows: BTreeMap<&str, Accum> = BTreeMap::new();
    for name in [
        "xhat_forward",
        "h_forward",
        "k_row",
        "p_row",
        "y_row",
        "g2_identity",
        "stationarity",
    ] {
        rows.insert(name, Accum::new());
    }

    for path in 0..paths {
        let dw0: Vec<f64> = (0..steps)
            .map(|m| dt.sqrt() * streams.normal(StreamPurpose::Common, 0, path as u64, m as u64, 0))
            .collect();
        let mf = simulate_meanfield(cs, &dw0);

        for m in 0..steps {
            let t = grid.node(m);
            let (xhat, h) = (&mf.xhat[m], &mf.h[m]);
            let u = cs.mean_control(m, xhat, h);
            let beta0 = cs.beta0(m, xhat, h);
            let z = cs.z(m, xhat, h);
            let g2 = cs.g2(m, xhat, h);
            let f_m = p.f.eval(t);
            let xi2_m = d.xi2(p, t);
            let mean_diff = &p.c0 * xhat + &p.d0 * &u - &r0_inv * &beta0;

            // Forward rows.
            let xhat_next =
                xhat + (&p.a * xhat + &p.b * &u + &f_m) * dt + &mean_diff * dw0[m];
            rows.get_mut("xhat_forward")
                .unwrap()
                .push(&(&mf.xhat[m + 1] - xhat_next));
            let h_next = h + &p.a * h * dt + &g2 * dw0[m];
            rows.get_mut("h_forward")
                .unwrap()
                .push(&(&mf.h[m + 1] - h_next));

            // Structural conditional expectations of the next layer.
            let e_xhat = xhat + (&p.a * xhat + &p.b * &u + &f_m) * dt;
            let e_h = h + &p.a * h * dt;
            let next = &cs.values[m + 1];

            // k row (conditional mean): drift relation with
            // zeta0_bar = E_m[kbar_{m+1} dW0]/dt.
            let kbar_m = cs.kbar(m, xhat, h);
            let e_kbar = next.k.mean().eval(&e_xhat, &e_h);
            let zeta0_bar = (&next.k.xi + &next.k.x) * &mean_diff + &next.k.h * &g2;
            let k_driver = p.c0.transpose() * &zeta0_bar
                + &q_minus_xi1 * xhat
                + &q_minus_xi1 * h
                - &xi2_m
                + &theta_bar * h
                + &c0t_gx * &g2;
            rows.get_mut("k_row")
                .unwrap()
                .push(&(&kbar_m - &a_adj * &e_kbar - k_driver * dt));

            // p row: drift and diffusion defects.
            let p_m = cs.pbar(m, xhat, h);
            let e_p = next.p.eval(&e_xhat, &e_h);
            let p_driver = p.c0.transpose() * &beta0 - &q_minus_xi1 * xhat + &xi2_m;
            rows.get_mut("p_row")
                .unwrap()
                .push(&(&p_m - &a_adj * &e_p - p_driver * dt));
            let beta_def = &next.p.x * &mean_diff + &next.p.h * &g2;
            rows.get_mut("p_row").unwrap().push(&(&beta0 - beta_def));

            // y row.
            let y_m = cs.y(m, xhat, h);
            let e_y = next.y.eval(&e_xhat, &e_h);
            let theta_m = &theta_bar * h + &c0t_gx * &g2;
            let y_driver = p.c0.transpose() * &z + &q_minus_xi1 * (xhat + h) - &xi2_m - theta_m;
            rows.get_mut("y_row")
                .unwrap()
                .push(&(&y_m - &a_adj * &e_y - y_driver * dt));
            let z_def = &next.y.x * &mean_diff + &next.y.h * &g2;
            rows.get_mut("y_row").unwrap().push(&(&z - z_def));

            // g2 identity.
            let g2_def = &d.ig * (&p.c0 * h + &r0_inv * (&z + &beta0));
            rows.get_mut("g2_identity").unwrap().push(&(&g2 - g2_def));

            // Stationarity of the conditional-mean strategy.
            let sigma_m = p.sigma.eval(t);
            let zeta_i_mean = &next.k.xi * (&p.d * &u + &sigma_m);
            let stat = &p.r_control * &u
                + p.b.transpose() * &e_kbar
                + p.d.transpose() * &zeta_i_mean
                + p.d0.transpose() * &zeta0_bar
                + p.b.transpose() * gx * h
                + p.d0.transpose() * gx * &g2;
            rows.get_mut("stationarity").unwrap().push(&stat);
        }

        // Terminal conditions enter as rows at m = steps.
        let last = steps;
        let (xt, ht) = (&mf.xhat[last], &mf.h[last]);
        let kbar_t = cs.kbar(last, xt, ht);
        rows.get_mut("k_row")
            .unwrap()
            .push(&(&kbar_t - (gx * xt - &d.xi2_g)));
        let p_t = cs.pbar(last, xt, ht);
        rows.get_mut("p_row")
            .unwrap()
            .push(&(&p_t - (-(gx * xt) + &d.xi2_g)));
        let y_t = cs.y(last, xt, ht);
        rows.get_mut("y_row")
            .unwrap()
            .push(&(&y_t - (gx * xt - &d.xi2_g)));
    }

    let normalizer = 1.0 + cs.representation_sup();
    let mut out = BTreeMap::new();
    let mut max_rms: f64 = 0.0;
    for (name, acc) in rows {
        let rms = acc.rms();
        max_rms = max_rms.max(rms);
        out.insert(name.to_string(), rms);
    }
    ResidualSummary {
        rows: out,
        normalizer,
        max_rms,
        paths,
    }
}
