//! Restriction of a solved consistency system to a binomial tree: the
//! decentralized strategy and the worst-case volatility become per-node
//! affine policies in the joint agent state.

use super::solution::ConsistencySolution;
use crate::error::{CoreError, Result};
use crate::numerics::{Matrix, Vector};
use crate::oracle::{AffineMap, TreePolicy, TreeSpec};

/// One Euler step of (xhat, h) with the tree's own step size, using the
/// solution's coefficient maps at fine node `fine_m`.
fn coarse_step(
    cs: &ConsistencySolution,
    fine_m: usize,
    xhat: &Vector,
    h: &Vector,
    dt: f64,
    dw0: f64,
) -> (Vector, Vector) {
    let p = &cs.params;
    let t = cs.grid.node(fine_m);
    let u = cs.mean_control(fine_m, xhat, h);
    let drift = &p.a * xhat + &p.b * &u + p.f.eval(t);
    let diff = cs.mean_diffusion(fine_m, xhat, h);
    let next_x = xhat + drift * dt + diff * dw0;
    let next_h = h + &p.a * h * dt + cs.g2(fine_m, xhat, h) * dw0;
    (next_x, next_h)
}

/// (xhat, h) at every tree node, driven by the node's common-sign history.
fn meanfield_on_tree(
    cs: &ConsistencySolution,
    spec: &TreeSpec,
    stride: usize,
) -> Vec<Vec<(Vector, Vector)>> {
    let branch = spec.branching();
    let dt = spec.dt();
    let sqdt = dt.sqrt();
    let mut layers = Vec::with_capacity(spec.steps + 1);
    layers.push(vec![(cs.params.x0.clone(), Vector::zeros(cs.n()))]);
    for m in 0..spec.steps {
        let prev = &layers[m];
        let mut next = Vec::with_capacity(prev.len() * branch);
        for (xhat, h) in prev {
            for s in 0..branch {
                let dw0 = spec.sign(s, 0) * sqdt;
                next.push(coarse_step(cs, m * stride, xhat, h, dt, dw0));
            }
        }
        layers.push(next);
    }
    layers
}

/// Decentralized strategy and mean-field adversary as tree policies.
///
/// The solution grid must share the horizon and have a step count equal to
/// an integer multiple of the tree's: coefficient maps are sampled at the
/// tree's node times while (xhat, h) advance with the tree's own step, so a
/// production-resolution strategy can face a coarse exact oracle.
pub fn strategy_tree_policies(
    cs: &ConsistencySolution,
    spec: &TreeSpec,
) -> Result<(TreePolicy, TreePolicy)> {
    if cs.steps() % spec.steps != 0 {
        return Err(CoreError::Invalid(format!(
            "tree has {} steps but the solution grid has {}; need an integer multiple",
            spec.steps,
            cs.steps()
        )));
    }
    if (spec.horizon - cs.grid.horizon()).abs() > 1e-12 * cs.grid.horizon() {
        return Err(CoreError::Invalid(
            "tree horizon does not match the solution grid".into(),
        ));
    }
    let stride = cs.steps() / spec.steps;
    let n = cs.n();
    let r = cs.params.r;
    let n_agents = spec.n_agents;
    let layers = meanfield_on_tree(cs, spec, stride);

    let mut control_layers = Vec::with_capacity(spec.steps);
    let mut adversary_layers = Vec::with_capacity(spec.steps);
    for m in 0..spec.steps {
        let c = &cs.coeffs[m * stride];
        let mut control_nodes = Vec::with_capacity(layers[m].len());
        let mut adversary_nodes = Vec::with_capacity(layers[m].len());
        for (xhat, h) in &layers[m] {
            // u_i = F_i x_i + (F_x xhat + F_h h + phi): block-diagonal gain
            // on the joint state, identical offset per agent.
            let mut gain = Matrix::zeros(r * n_agents, n * n_agents);
            for i in 0..n_agents {
                gain.view_mut((i * r, i * n), (r, n)).copy_from(&c.u.xi);
            }
            let per_agent = &c.u.x * xhat + &c.u.h * h + &c.u.c;
            let mut offset = Vector::zeros(r * n_agents);
            for i in 0..n_agents {
                offset.rows_mut(i * r, r).copy_from(&per_agent);
            }
            control_nodes.push(AffineMap { gain, offset });
            adversary_nodes.push(AffineMap {
                gain: Matrix::zeros(n, n * n_agents),
                offset: cs.adversary(m * stride, xhat, h),
            });
        }
        control_layers.push(control_nodes);
        adversary_layers.push(adversary_nodes);
    }
    Ok((
        TreePolicy::PerNode(control_layers),
        TreePolicy::PerNode(adversary_layers),
    ))
}
