//! Finite-population simulation under the decentralized strategies and the
//! mean-field worst-case volatility, social-cost evaluation, convergence
//! studies over N, and exact tree-scale comparisons.

use crate::error::{CoreError, Result};
use crate::meanfield::{simulate_meanfield, strategy_tree_policies, ConsistencySolution, MeanFieldPath};
use crate::model::{DerivedQuantities, ModelParams};
use crate::numerics::{RandomStreams, StreamPurpose, TimeGrid, Vector};
use crate::oracle::{tree_evaluate, tree_inner_sup, tree_minmax, TreeSpec};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryMode {
    /// Substitute the mean-field worst case sigma0_hat = -R0^{-1} beta0_hat.
    Meanfield,
    /// Exact worst case from the tree oracle (N <= 3, steps <= 6).
    TreeExact,
}

/// Sweep configuration for convergence studies.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_list: Vec<usize>,
    pub paths_per_n: usize,
    pub grid: TimeGrid,
    pub master_seed: u64,
    pub adversary_mode: AdversaryMode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.adversary_mode == AdversaryMode::TreeExact {
            if self.n_list.iter().any(|&n| n > 3) {
                return Err(CoreError::Capacity(
                    "tree-exact adversary needs N <= 3".into(),
                ));
            }
            if self.grid.steps() > 6 {
                return Err(CoreError::Capacity(
                    "tree-exact adversary needs at most 6 grid steps".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One simulated population: per-agent paths, the shared common-noise pair,
/// and the realized adversary path.
#[derive(Debug, Clone)]
pub struct PopulationPaths {
    /// `states[i][m]`: agent i at node m.
    pub states: Vec<Vec<Vector>>,
    /// `controls[i][m]`: agent i at step m.
    pub controls: Vec<Vec<Vector>>,
    pub meanfield: MeanFieldPath,
    /// Adversary value per step.
    pub sigma0: Vec<Vector>,
    /// Arithmetic mean of agent states per node.
    pub average: Vec<Vector>,
}

/// Euler simulation of N agents on one common-noise path, each driven by its
/// own idiosyncratic stream plus the shared stream. `stream_of_agent` maps an
/// agent to its noise stream id (identity in normal use; permuting two ids
/// must permute the corresponding paths exactly).
pub fn simulate_population_with_streams(
    cs: &ConsistencySolution,
    n_agents: usize,
    path: u64,
    streams: &RandomStreams,
    stream_of_agent: &[u64],
) -> Result<PopulationPaths> {
    let p = &cs.params;
    let steps = cs.steps();
    let dt = cs.grid.dt();
    let sqdt = dt.sqrt();
    let r0_inv = p
        .r0
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::Singular("R0".into()))?;

    let dw0: Vec<f64> = (0..steps)
        .map(|m| sqdt * streams.normal(StreamPurpose::Common, 0, path, m as u64, 0))
        .collect();
    let mf = simulate_meanfield(cs, &dw0);
    let sigma0: Vec<Vector> = (0..steps)
        .map(|m| cs.adversary(m, &mf.xhat[m], &mf.h[m]))
        .collect();

    let mut states = vec![Vec::with_capacity(steps + 1); n_agents];
    let mut controls = vec![Vec::with_capacity(steps); n_agents];
    for state in states.iter_mut() {
        state.push(p.x0.clone());
    }
    for m in 0..steps {
        let t = cs.grid.node(m);
        let f_m = p.f.eval(t);
        let sigma_m = p.sigma.eval(t);
        let beta0 = cs.beta0(m, &mf.xhat[m], &mf.h[m]);
        let r0_beta = &r0_inv * &beta0;
        for i in 0..n_agents {
            let x = states[i][m].clone();
            let u = cs.strategy(m, &x, &mf.xhat[m], &mf.h[m]);
            let dwi = sqdt
                * streams.normal(
                    StreamPurpose::Idiosyncratic,
                    stream_of_agent[i],
                    path,
                    m as u64,
                    0,
                );
            let drift = &p.a * &x + &p.b * &u + &f_m;
            let idio = &p.d * &u + &sigma_m;
            let common = &p.c0 * &x + &p.d0 * &u - &r0_beta;
            let next = &x + drift * dt + idio * dwi + common * dw0[m];
            if !next.iter().all(|v| v.is_finite()) {
                return Err(CoreError::Breakdown {
                    node: m,
                    time: t,
                    what: format!("agent {i} state became non-finite"),
                });
            }
            states[i].push(next);
            controls[i].push(u);
        }
    }
    let average: Vec<Vector> = (0..=steps)
        .map(|m| {
            let mut acc = Vector::zeros(p.n);
            for state in &states {
                acc += &state[m];
            }
            acc / n_agents as f64
        })
        .collect();
    Ok(PopulationPaths {
        states,
        controls,
        meanfield: mf,
        sigma0,
        average,
    })
}

pub fn simulate_population(
    cs: &ConsistencySolution,
    n_agents: usize,
    path: u64,
    streams: &RandomStreams,
) -> Result<PopulationPaths> {
    let ids: Vec<u64> = (0..n_agents as u64).collect();
    simulate_population_with_streams(cs, n_agents, path, streams, &ids)
}

/// Social cost of one realized population under a given adversary path:
/// trapezoidal rule on the running cost, exact terminal cost. The strategy
/// and adversary are step objects, so the node-M integrand reuses the last
/// step's values.
pub fn social_cost(p: &ModelParams, pop: &PopulationPaths, sigma0: &[Vector], grid: &TimeGrid) -> f64 {
    let steps = grid.steps();
    let dt = grid.dt();
    let n_agents = pop.states.len();
    let running = |m: usize| -> f64 {
        let t = grid.node(m);
        let eta = p.eta.eval(t);
        let step_idx = m.min(steps - 1);
        let s0 = &sigma0[step_idx];
        let mut total = 0.0;
        for i in 0..n_agents {
            let dev = &pop.states[i][m] - &p.gamma * &pop.average[m] - &eta;
            let u = &pop.controls[i][step_idx];
            total += 0.5 * (dev.transpose() * &p.q * &dev)[(0, 0)];
            total += 0.5 * (u.transpose() * &p.r_control * u)[(0, 0)];
        }
        total - 0.5 * n_agents as f64 * (s0.transpose() * &p.r0 * s0)[(0, 0)]
    };
    let mut cost = 0.5 * (running(0) + running(steps));
    for m in 1..steps {
        cost += running(m);
    }
    cost *= dt;
    for i in 0..n_agents {
        let dev = &pop.states[i][steps] - &p.gamma0 * &pop.average[steps] - &p.eta0;
        cost += 0.5 * (dev.transpose() * &p.g * &dev)[(0, 0)];
    }
    cost
}

/// Per-replicate observables of one simulated population.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRow {
    pub n_agents: usize,
    pub replicate: usize,
    pub social_cost: f64,
    pub per_capita_cost: f64,
    /// sup over nodes of |average - xhat|^2.
    pub meanfield_gap_sq: f64,
    /// Integral of |R0 sigma0-proxy - R0 sigma0_hat|^2 dt, where the proxy
    /// applies the worst-case map to the empirical average.
    pub adversary_gap_sq: f64,
}

fn replicate_row(
    cs: &ConsistencySolution,
    n_agents: usize,
    replicate: usize,
    streams: &RandomStreams,
) -> Result<ReplicateRow> {
    let pop = simulate_population(cs, n_agents, replicate as u64, streams)?;
    let cost = social_cost(&cs.params, &pop, &pop.sigma0, &cs.grid);
    let steps = cs.steps();
    let dt = cs.grid.dt();
    let mut sup_gap: f64 = 0.0;
    let mut adv_gap = 0.0;
    for m in 0..=steps {
        let diff = &pop.average[m] - &pop.meanfield.xhat[m];
        sup_gap = sup_gap.max(diff.norm_squared());
        if m < steps {
            // R0 sigma0 is -beta0; the proxy replaces xhat by the empirical
            // average in the beta0 representation, so the gap is the
            // worst-case-map image of the mean-field error.
            let gap = &cs.coeffs[m].beta0.x * diff;
            adv_gap += gap.norm_squared() * dt;
        }
    }
    Ok(ReplicateRow {
        n_agents,
        replicate,
        social_cost: cost,
        per_capita_cost: cost / n_agents as f64,
        meanfield_gap_sq: sup_gap,
        adversary_gap_sq: adv_gap,
    })
}

/// Least-squares slope of log(y) against log(x).
#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Half-width of the 95 percent confidence interval on the slope.
    pub slope_ci95: f64,
    /// Residual sum of squares of the log-log fit.
    pub rss: f64,
    pub points: usize,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(CoreError::FitRefused(format!(
            "need at least 3 points, got {}",
            xs.len()
        )));
    }
    if ys.iter().any(|&y| y <= 0.0) || xs.iter().any(|&x| x <= 0.0) {
        return Err(CoreError::FitRefused(
            "log-log fit needs positive values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let dof = (lx.len().max(3) - 2) as f64;
    let slope_stderr = (rss / dof / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        slope_stderr,
        slope_ci95: 1.96 * slope_stderr,
        rss,
        points: xs.len(),
    })
}

/// Full fit plus the drop-smallest-N variant, and the one selected by the
/// spec rule (drop the smallest N when it improves the fit residual by more
/// than 30 percent).
#[derive(Debug, Clone, Serialize)]
pub struct SlopePair {
    pub full: SlopeFit,
    pub without_smallest: Option<SlopeFit>,
    pub selected_slope: f64,
}

fn slope_pair(xs: &[f64], ys: &[f64]) -> Result<SlopePair> {
    let full = fit_loglog(xs, ys)?;
    let without_smallest = if xs.len() >= 4 {
        Some(fit_loglog(&xs[1..], &ys[1..])?)
    } else {
        None
    };
    let selected_slope = match &without_smallest {
        Some(trimmed) if trimmed.rss < 0.7 * full.rss => trimmed.slope,
        _ => full.slope,
    };
    Ok(SlopePair {
        full,
        without_smallest,
        selected_slope,
    })
}

/// Per-N aggregates across replicates.
#[derive(Debug, Clone, Serialize)]
pub struct PerNStats {
    pub n_agents: usize,
    pub replicates: usize,
    pub mean_per_capita_cost: f64,
    pub stderr_per_capita_cost: f64,
    pub mean_meanfield_gap_sq: f64,
    pub stderr_meanfield_gap_sq: f64,
    pub mean_adversary_gap_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub per_n: Vec<PerNStats>,
    pub meanfield_error_slopes: SlopePair,
    pub adversary_gap_slopes: Option<SlopePair>,
    /// |per-capita cost - reference| against N, reference = largest N.
    pub cost_gap_slopes: Option<SlopePair>,
    /// max_N |per-capita cost| <= bound * max over the two smallest N.
    pub per_capita_bounded: bool,
    pub rows: Vec<ReplicateRow>,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean, (var / k).sqrt())
}

/// All replicates for one population size, in replicate order.
pub fn simulate_batch(
    cs: &ConsistencySolution,
    n_agents: usize,
    paths: usize,
    master_seed: u64,
) -> Result<Vec<ReplicateRow>> {
    let streams = RandomStreams::new(master_seed);
    let mut batch: Vec<Result<ReplicateRow>> = Vec::with_capacity(paths);
    (0..paths)
        .into_par_iter()
        .map(|rep| replicate_row(cs, n_agents, rep, &streams))
        .collect_into_vec(&mut batch);
    let mut done = Vec::with_capacity(paths);
    for row in batch {
        done.push(row?);
    }
    Ok(done)
}

/// Aggregate a batch of replicates into per-N statistics.
pub fn aggregate_rows(n_agents: usize, rows: &[ReplicateRow]) -> PerNStats {
    let (cost_mean, cost_se) =
        mean_stderr(&rows.iter().map(|r| r.per_capita_cost).collect::<Vec<_>>());
    let (gap_mean, gap_se) =
        mean_stderr(&rows.iter().map(|r| r.meanfield_gap_sq).collect::<Vec<_>>());
    let (adv_mean, _) = mean_stderr(&rows.iter().map(|r| r.adversary_gap_sq).collect::<Vec<_>>());
    PerNStats {
        n_agents,
        replicates: rows.len(),
        mean_per_capita_cost: cost_mean,
        stderr_per_capita_cost: cost_se,
        mean_meanfield_gap_sq: gap_mean,
        stderr_meanfield_gap_sq: gap_se,
        mean_adversary_gap_sq: adv_mean,
    }
}

/// Run the N sweep and fit the convergence rates.
pub fn convergence_study(cs: &ConsistencySolution, cfg: &SimConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    if cfg.adversary_mode == AdversaryMode::TreeExact {
        return Err(CoreError::Invalid(
            "tree-exact adversaries are evaluated without sampling; use tree_comparison".into(),
        ));
    }
    if cfg.n_list.len() < 3 {
        return Err(CoreError::FitRefused(format!(
            "need at least 3 population sizes, got {}",
            cfg.n_list.len()
        )));
    }
    if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::Invalid("N list must be ascending".into()));
    }
    if cfg.grid.steps() != cs.steps()
        || (cfg.grid.horizon() - cs.grid.horizon()).abs() > 1e-12
    {
        return Err(CoreError::Invalid(
            "study grid must match the solution grid".into(),
        ));
    }

    let mut per_n = Vec::with_capacity(cfg.n_list.len());
    let mut rows = Vec::new();
    for &n_agents in &cfg.n_list {
        // Replicates are independent and collected in index order, so the
        // result does not depend on the worker count.
        let done = simulate_batch(cs, n_agents, cfg.paths_per_n, cfg.master_seed)?;
        per_n.push(aggregate_rows(n_agents, &done));
        rows.extend(done);
    }

    let ns: Vec<f64> = per_n.iter().map(|s| s.n_agents as f64).collect();
    let gaps: Vec<f64> = per_n.iter().map(|s| s.mean_meanfield_gap_sq).collect();
    let meanfield_error_slopes = slope_pair(&ns, &gaps)?;

    let advs: Vec<f64> = per_n.iter().map(|s| s.mean_adversary_gap_sq).collect();
    let adversary_gap_slopes = if advs.iter().all(|&v| v > 0.0) {
        Some(slope_pair(&ns, &advs)?)
    } else {
        None
    };

    // Per-capita-cost gap against the largest-N reference.
    let reference = per_n.last().unwrap().mean_per_capita_cost;
    let mut gap_ns = Vec::new();
    let mut gap_vals = Vec::new();
    for s in &per_n[..per_n.len() - 1] {
        let gap = (s.mean_per_capita_cost - reference).abs();
        if gap > 0.0 {
            gap_ns.push(s.n_agents as f64);
            gap_vals.push(gap);
        }
    }
    let cost_gap_slopes = if gap_ns.len() >= 3 {
        Some(slope_pair(&gap_ns, &gap_vals)?)
    } else {
        None
    };

    // Boundedness across the sweep: no growth relative to the small-N end.
    let small_ref = per_n[..2.min(per_n.len())]
        .iter()
        .map(|s| s.mean_per_capita_cost.abs())
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let per_capita_bounded = per_n
        .iter()
        .all(|s| s.mean_per_capita_cost.abs() <= 1.5 * small_ref);

    Ok(SimulationResult {
        per_n,
        meanfield_error_slopes,
        adversary_gap_slopes,
        cost_gap_slopes,
        per_capita_bounded,
        rows,
    })
}

/// Common-random-number probe of the adversary's optimality: perturbing the
/// worst-case volatility path must not increase the mean social cost beyond
/// Monte Carlo noise.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationRow {
    pub direction: String,
    pub epsilon: f64,
    pub mean_increase: f64,
    pub stderr: f64,
    pub within_noise: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub rows: Vec<PerturbationRow>,
    pub all_within_noise: bool,
}

/// Deterministic perturbation direction evaluated on the grid.
pub fn perturbation_direction(kind: usize, n: usize, grid: &TimeGrid) -> (String, Vec<Vector>) {
    let steps = grid.steps();
    let horizon = grid.horizon();
    let mut values = Vec::with_capacity(steps);
    let name = match kind % 4 {
        0 => "constant-e0",
        1 => "constant-alternating",
        2 => "sine",
        _ => "cosine-mixed",
    };
    for m in 0..steps {
        let t = grid.node(m) / horizon;
        let mut v = Vector::zeros(n);
        match kind % 4 {
            0 => v[0] = 1.0,
            1 => {
                for j in 0..n {
                    v[j] = if j % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
            2 => {
                for j in 0..n {
                    v[j] = (std::f64::consts::PI * (j + 1) as f64 * t).sin();
                }
            }
            _ => {
                for j in 0..n {
                    v[j] = (std::f64::consts::PI * (2 * j + 1) as f64 * t).cos() * 0.7;
                }
            }
        }
        values.push(v);
    }
    (name.to_string(), values)
}

fn population_cost_with_adversary(
    cs: &ConsistencySolution,
    n_agents: usize,
    path: u64,
    streams: &RandomStreams,
    sigma0_override: &[Vector],
) -> Result<f64> {
    // Re-simulate the population with the SAME noise draws but the agents'
    // dynamics driven by the perturbed adversary path; the strategies and
    // the mean-field pair stay at the solved design.
    let p = &cs.params;
    let steps = cs.steps();
    let dt = cs.grid.dt();
    let sqdt = dt.sqrt();
    let dw0: Vec<f64> = (0..steps)
        .map(|m| sqdt * streams.normal(StreamPurpose::Common, 0, path, m as u64, 0))
        .collect();
    let mf = simulate_meanfield(cs, &dw0);
    let mut states = vec![Vec::with_capacity(steps + 1); n_agents];
    let mut controls = vec![Vec::with_capacity(steps); n_agents];
    for state in states.iter_mut() {
        state.push(p.x0.clone());
    }
    for m in 0..steps {
        let t = cs.grid.node(m);
        let f_m = p.f.eval(t);
        let sigma_m = p.sigma.eval(t);
        for i in 0..n_agents {
            let x = states[i][m].clone();
            let u = cs.strategy(m, &x, &mf.xhat[m], &mf.h[m]);
            let dwi = sqdt
                * streams.normal(StreamPurpose::Idiosyncratic, i as u64, path, m as u64, 0);
            let drift = &p.a * &x + &p.b * &u + &f_m;
            let idio = &p.d * &u + &sigma_m;
            let common = &p.c0 * &x + &p.d0 * &u + &sigma0_override[m];
            states[i].push(&x + drift * dt + idio * dwi + common * dw0[m]);
            controls[i].push(u);
        }
    }
    let average: Vec<Vector> = (0..=steps)
        .map(|m| {
            let mut acc = Vector::zeros(p.n);
            for state in &states {
                acc += &state[m];
            }
            acc / n_agents as f64
        })
        .collect();
    let pop = PopulationPaths {
        states,
        controls,
        meanfield: mf,
        sigma0: sigma0_override.to_vec(),
        average,
    };
    Ok(social_cost(p, &pop, sigma0_override, &cs.grid))
}

/// Evaluate the perturbation rows for the given directions and magnitudes.
pub fn adversary_perturbation_check(
    cs: &ConsistencySolution,
    n_agents: usize,
    paths: usize,
    seed: u64,
    directions: &[(String, Vec<Vector>)],
    epsilons: &[f64],
) -> Result<PerturbationReport> {
    let streams = RandomStreams::new(seed);
    let steps = cs.steps();

    // Baseline adversary along each path depends on the realized mean-field
    // pair; precompute per-path baseline adversary paths and costs.
    let mut baseline_costs = Vec::with_capacity(paths);
    let mut baseline_sigma: Vec<Vec<Vector>> = Vec::with_capacity(paths);
    for path in 0..paths {
        let dw0: Vec<f64> = (0..steps)
            .map(|m| {
                cs.grid.dt().sqrt()
                    * streams.normal(StreamPurpose::Common, 0, path as u64, m as u64, 0)
            })
            .collect();
        let mf = simulate_meanfield(cs, &dw0);
        let sigma: Vec<Vector> = (0..steps)
            .map(|m| cs.adversary(m, &mf.xhat[m], &mf.h[m]))
            .collect();
        let cost =
            population_cost_with_adversary(cs, n_agents, path as u64, &streams, &sigma)?;
        baseline_costs.push(cost);
        baseline_sigma.push(sigma);
    }

    let mut rows = Vec::new();
    for (name, direction) in directions {
        for &eps in epsilons {
            let mut diffs = Vec::with_capacity(paths);
            for path in 0..paths {
                let perturbed: Vec<Vector> = (0..steps)
                    .map(|m| &baseline_sigma[path][m] + &direction[m] * eps)
                    .collect();
                let cost = population_cost_with_adversary(
                    cs,
                    n_agents,
                    path as u64,
                    &streams,
                    &perturbed,
                )?;
                diffs.push(cost - baseline_costs[path]);
            }
            let (mean, se) = mean_stderr(&diffs);
            rows.push(PerturbationRow {
                direction: name.clone(),
                epsilon: eps,
                mean_increase: mean,
                stderr: se,
                within_noise: mean <= 3.0 * se,
            });
        }
    }
    let all_within_noise = rows.iter().all(|r| r.within_noise);
    Ok(PerturbationReport {
        rows,
        all_within_noise,
    })
}

/// Exact tree-scale comparison between the decentralized design, the
/// mean-field adversary substitution, and the centralized saddle.
#[derive(Debug, Clone, Serialize)]
pub struct TreeComparison {
    pub n_agents: usize,
    pub steps: usize,
    /// Centralized min-max value.
    pub minmax_value: f64,
    /// Decentralized strategies against their exact worst case.
    pub decentralized_worst_case: f64,
    /// Decentralized strategies against the substituted mean-field adversary.
    pub decentralized_meanfield_adversary: f64,
    /// decentralized_worst_case - minmax_value (>= 0).
    pub optimality_gap: f64,
    /// Worst-case volatility at t = 0: mean-field map vs exact tree argmax.
    pub sigma0_root_meanfield: Vec<f64>,
    pub sigma0_root_tree: Vec<f64>,
}

pub fn tree_comparison(
    p: &ModelParams,
    d: &DerivedQuantities,
    cs: &ConsistencySolution,
    spec: &TreeSpec,
) -> Result<TreeComparison> {
    let (control, mf_adversary) = strategy_tree_policies(cs, spec)?;
    let saddle = tree_minmax(p, d, spec)?;
    let inner = tree_inner_sup(p, d, spec, &control)?;
    let mf_value = tree_evaluate(p, d, spec, &control, &mf_adversary)?;

    let x0_joint = crate::model::stacked_identity(spec.n_agents, p.n) * &p.x0;
    let sigma_tree = inner.argmax.eval(0, 0, &x0_joint);
    let h0 = Vector::zeros(p.n);
    let sigma_mf = cs.adversary(0, &p.x0, &h0);

    Ok(TreeComparison {
        n_agents: spec.n_agents,
        steps: spec.steps,
        minmax_value: saddle.value,
        decentralized_worst_case: inner.value,
        decentralized_meanfield_adversary: mf_value,
        optimality_gap: inner.value - saddle.value,
        sigma0_root_meanfield: sigma_mf.iter().cloned().collect(),
        sigma0_root_tree: sigma_tree.iter().cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{benchmark_instance, scalar_instance};
    use crate::meanfield::{solve_consistency, SolveMethod};
    use crate::model::derive_offsets;

    fn solved(steps: usize) -> ConsistencySolution {
        let p = benchmark_instance();
        let d = derive_offsets(&p).unwrap();
        let grid = TimeGrid::new(p.horizon, steps).unwrap();
        solve_consistency(&p, &d, &grid, SolveMethod::Affine).unwrap()
    }

    #[test]
    fn deterministic_drift_matches_reference() {
        // All noise and cost channels off, f = 0: every agent follows the
        // deterministic flow x' = Ax, reproduced by a fine RK-style check.
        let mut p = benchmark_instance();
        p.q *= 0.0;
        p.g *= 0.0;
        p.gamma *= 0.0;
        p.gamma0 *= 0.0;
        p.c0 *= 0.0;
        p.d *= 0.0;
        p.d0 *= 0.0;
        p.sigma = crate::model::OffsetFn::zero(2);
        p.eta = crate::model::OffsetFn::zero(2);
        p.eta0 = Vector::zeros(2);
        p.f = crate::model::OffsetFn::zero(2);
        let d = derive_offsets(&p).unwrap();
        let steps = 512;
        let grid = TimeGrid::new(p.horizon, steps).unwrap();
        let cs = solve_consistency(&p, &d, &grid, SolveMethod::Affine).unwrap();
        let streams = RandomStreams::new(9);
        let pop = simulate_population(&cs, 3, 0, &streams).unwrap();
        let expected = crate::numerics::mat_exp(&p.a, p.horizon).unwrap() * &p.x0;
        for state in &pop.states {
            assert!((&state[steps] - &expected).amax() < 3e-3);
        }
    }

    #[test]
    fn stream_swap_permutes_agents_exactly() {
        let cs = solved(32);
        let streams = RandomStreams::new(123);
        let base =
            simulate_population_with_streams(&cs, 3, 0, &streams, &[0, 1, 2]).unwrap();
        let swapped =
            simulate_population_with_streams(&cs, 3, 0, &streams, &[1, 0, 2]).unwrap();
        for m in 0..=32 {
            assert_eq!(base.states[0][m], swapped.states[1][m]);
            assert_eq!(base.states[1][m], swapped.states[0][m]);
            assert_eq!(base.states[2][m], swapped.states[2][m]);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let cs = solved(32);
        let streams = RandomStreams::new(7);
        let a = simulate_population(&cs, 4, 3, &streams).unwrap();
        let b = simulate_population(&cs, 4, 3, &streams).unwrap();
        for (x, y) in a.states.iter().zip(b.states.iter()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u, v);
            }
        }
    }

    #[test]
    fn zero_paths_zero_cost() {
        let mut p = benchmark_instance();
        p.q *= 0.0;
        p.g *= 0.0;
        p.eta = crate::model::OffsetFn::zero(2);
        p.eta0 = Vector::zeros(2);
        let grid = TimeGrid::new(p.horizon, 8).unwrap();
        let zero_path = vec![Vector::zeros(2); 9];
        let pop = PopulationPaths {
            states: vec![zero_path.clone(); 2],
            controls: vec![vec![Vector::zeros(2); 8]; 2],
            meanfield: MeanFieldPath {
                xhat: zero_path.clone(),
                h: zero_path,
                dw0: vec![0.0; 8],
            },
            sigma0: vec![Vector::zeros(2); 8],
            average: vec![Vector::zeros(2); 9],
        };
        let cost = social_cost(&p, &pop, &pop.sigma0, &grid);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn pure_penalty_cost_is_negative() {
        // Q = G = 0, u = 0, sigma0 = const c: only the soft constraint
        // survives: cost = -(N/2) T |c|^2_{R0}.
        let mut p = benchmark_instance();
        p.q *= 0.0;
        p.g *= 0.0;
        p.eta = crate::model::OffsetFn::zero(2);
        p.eta0 = Vector::zeros(2);
        let grid = TimeGrid::new(p.horizon, 16).unwrap();
        let zero_path = vec![Vector::zeros(2); 17];
        let c = nalgebra::dvector![0.5, -0.3];
        let pop = PopulationPaths {
            states: vec![zero_path.clone(); 3],
            controls: vec![vec![Vector::zeros(2); 16]; 3],
            meanfield: MeanFieldPath {
                xhat: zero_path.clone(),
                h: zero_path,
                dw0: vec![0.0; 16],
            },
            sigma0: vec![c.clone(); 16],
            average: vec![Vector::zeros(2); 17],
        };
        let cost = social_cost(&p, &pop, &pop.sigma0, &grid);
        let expected = -0.5 * 3.0 * p.horizon * (c.transpose() * &p.r0 * &c)[(0, 0)];
        assert!((cost - expected).abs() < 1e-12);
    }

    #[test]
    fn euler_strong_order_half() {
        // Against a fine common-refinement reference, halving dt shrinks the
        // strong terminal error by about sqrt(2).
        let p = scalar_instance();
        let d = derive_offsets(&p).unwrap();
        let fine_steps = 512;
        let streams = RandomStreams::new(77);
        let paths = 400;
        let mut errors = Vec::new();
        let grids = [64usize, 128, 256];

        // Reference per path: Euler at the fine resolution with aggregated
        // increments shared across resolutions.
        for &coarse in &grids {
            let grid = TimeGrid::new(p.horizon, coarse).unwrap();
            let cs = solve_consistency(&p, &d, &grid, SolveMethod::Affine).unwrap();
            let fine_grid = TimeGrid::new(p.horizon, fine_steps).unwrap();
            let cs_fine =
                solve_consistency(&p, &d, &fine_grid, SolveMethod::Affine).unwrap();
            let stride = fine_steps / coarse;
            let mut err_sq = 0.0;
            for path in 0..paths {
                let dt_fine = fine_grid.dt();
                let fine_dw0: Vec<f64> = (0..fine_steps)
                    .map(|m| {
                        dt_fine.sqrt()
                            * streams.normal(StreamPurpose::Common, 0, path, m as u64, 0)
                    })
                    .collect();
                let fine_dwi: Vec<f64> = (0..fine_steps)
                    .map(|m| {
                        dt_fine.sqrt()
                            * streams.normal(StreamPurpose::Idiosyncratic, 0, path, m as u64, 0)
                    })
                    .collect();
                let coarse_dw0: Vec<f64> = (0..coarse)
                    .map(|k| fine_dw0[k * stride..(k + 1) * stride].iter().sum())
                    .collect();
                let coarse_dwi: Vec<f64> = (0..coarse)
                    .map(|k| fine_dwi[k * stride..(k + 1) * stride].iter().sum())
                    .collect();
                let mf = simulate_meanfield(&cs, &coarse_dw0);
                let x = crate::meanfield::simulate_agent(&cs, &mf, &coarse_dwi);
                let mf_fine = simulate_meanfield(&cs_fine, &fine_dw0);
                let x_fine = crate::meanfield::simulate_agent(&cs_fine, &mf_fine, &fine_dwi);
                let diff = (&x[coarse] - &x_fine[fine_steps]).norm_squared();
                err_sq += diff;
            }
            errors.push((err_sq / paths as f64).sqrt());
        }
        let r1 = errors[0] / errors[1];
        let r2 = errors[1] / errors[2];
        for (i, r) in [r1, r2].iter().enumerate() {
            assert!(
                *r > 1.15 && *r < 1.9,
                "strong-order ratio {i}: {r} (errors {errors:?})"
            );
        }
    }

    #[test]
    fn study_refuses_short_n_list() {
        let cs = solved(16);
        let cfg = SimConfig {
            n_list: vec![2, 4],
            paths_per_n: 10,
            grid: cs.grid.clone(),
            master_seed: 1,
            adversary_mode: AdversaryMode::Meanfield,
        };
        assert!(matches!(
            convergence_study(&cs, &cfg),
            Err(CoreError::FitRefused(_))
        ));
    }

    #[test]
    fn meanfield_error_decays_at_rate_one() {
        let cs = solved(64);
        let cfg = SimConfig {
            n_list: vec![2, 4, 8, 16, 32],
            paths_per_n: 100,
            grid: cs.grid.clone(),
            master_seed: 2026,
            adversary_mode: AdversaryMode::Meanfield,
        };
        let result = convergence_study(&cs, &cfg).unwrap();
        let slope = result.meanfield_error_slopes.selected_slope;
        assert!(
            (-1.2..=-0.8).contains(&slope),
            "mean-field error slope {slope}"
        );
        // Monotone decrease within noise along the sweep.
        for w in result.per_n.windows(2) {
            assert!(
                w[1].mean_meanfield_gap_sq
                    < w[0].mean_meanfield_gap_sq + 3.0 * w[0].stderr_meanfield_gap_sq,
                "LLN monotonicity: {} -> {}",
                w[0].mean_meanfield_gap_sq,
                w[1].mean_meanfield_gap_sq
            );
        }
        assert!(result.per_capita_bounded);
    }

    #[test]
    fn fit_loglog_recovers_powers() {
        let xs = [2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        let ys2: Vec<f64> = xs.iter().map(|x| 5.0 / x.sqrt()).collect();
        let fit2 = fit_loglog(&xs, &ys2).unwrap();
        assert!((fit2.slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_cost_matches_tree_within_discretization() {
        // Cross-module agreement: leaf enumeration on the binomial tree vs
        // Monte Carlo with Gaussian increments and trapezoidal quadrature.
        // The quadrature conventions differ at O(dt), the increments at
        // O(dt) weakly; allow 3 standard errors plus a discretization band.
        let p = scalar_instance();
        let d = derive_offsets(&p).unwrap();
        let steps = 4;
        let grid = TimeGrid::new(p.horizon, steps).unwrap();
        let cs = solve_consistency(&p, &d, &grid, SolveMethod::Affine).unwrap();
        let spec = TreeSpec::new(2, steps, p.horizon).unwrap();
        let (control, adversary) = strategy_tree_policies(&cs, &spec).unwrap();
        let tree_value = tree_evaluate(&p, &d, &spec, &control, &adversary).unwrap();

        let streams = RandomStreams::new(31);
        let paths = 4000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for path in 0..paths {
            let pop = simulate_population(&cs, 2, path, &streams).unwrap();
            let cost = social_cost(&p, &pop, &pop.sigma0, &grid);
            sum += cost;
            sum_sq += cost * cost;
        }
        let mean = sum / paths as f64;
        let var = (sum_sq / paths as f64 - mean * mean).max(0.0);
        let se = (var / paths as f64).sqrt();
        let dt_band = 0.5 * grid.dt() * tree_value.abs().max(1.0);
        assert!(
            (mean - tree_value).abs() < 3.0 * se + dt_band,
            "MC {mean} +- {se} vs tree {tree_value} (band {dt_band})"
        );
    }

    #[test]
    fn tree_exact_mode_validated() {
        let cs = solved(16);
        let cfg = SimConfig {
            n_list: vec![2, 4],
            paths_per_n: 1,
            grid: cs.grid.clone(),
            master_seed: 0,
            adversary_mode: AdversaryMode::TreeExact,
        };
        // N = 4 over the tree cap.
        assert!(matches!(cfg.validate(), Err(CoreError::Capacity(_))));
        let cfg2 = SimConfig {
            n_list: vec![2],
            paths_per_n: 1,
            grid: TimeGrid::new(1.0, 12).unwrap(),
            master_seed: 0,
            adversary_mode: AdversaryMode::TreeExact,
        };
        assert!(matches!(cfg2.validate(), Err(CoreError::Capacity(_))));
    }

    #[test]
    fn tree_comparison_gap_nonnegative() {
        let p = scalar_instance();
        let d = derive_offsets(&p).unwrap();
        let steps = 4;
        let grid = TimeGrid::new(p.horizon, steps).unwrap();
        let cs = solve_consistency(&p, &d, &grid, SolveMethod::Affine).unwrap();
        let spec = TreeSpec::new(2, steps, p.horizon).unwrap();
        let cmp = tree_comparison(&p, &d, &cs, &spec).unwrap();
        assert!(
            cmp.optimality_gap >= -1e-10,
            "decentralized cost cannot beat the centralized saddle: {}",
            cmp.optimality_gap
        );
        // The substituted mean-field adversary cannot beat the exact worst case.
        assert!(cmp.decentralized_meanfield_adversary <= cmp.decentralized_worst_case + 1e-10);
    }
}
