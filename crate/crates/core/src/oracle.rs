//! Exact tiny-scale solver. All Brownian motions are discretized as
//! +/-sqrt(dt) binomial signs, which keeps every conditional expectation of a
//! quadratic exact, so backward induction on quadratic value functions solves
//! the inner sup, the full min-max, and policy evaluation without sampling
//! error.

use crate::error::{CoreError, Result};
use crate::model::{block_diag, stacked_identity, DerivedQuantities, ModelParams};
use crate::numerics::{min_eig, symmetrize, Matrix, Vector};

/// Definiteness margin required before any node solve.
const HESSIAN_MARGIN: f64 = 1e-10;

/// Tree geometry: one common sign and one sign per agent at each step.
#[derive(Debug, Clone)]
pub struct TreeSpec {
    pub n_agents: usize,
    pub steps: usize,
    pub horizon: f64,
    pub node_cap: usize,
}

pub const DEFAULT_NODE_CAP: usize = 1 << 21;

impl TreeSpec {
    pub fn new(n_agents: usize, steps: usize, horizon: f64) -> Result<Self> {
        Self::with_cap(n_agents, steps, horizon, DEFAULT_NODE_CAP)
    }

    pub fn with_cap(n_agents: usize, steps: usize, horizon: f64, node_cap: usize) -> Result<Self> {
        if n_agents == 0 || n_agents > 3 {
            return Err(CoreError::Capacity(format!(
                "tree supports 1..=3 agents, got {n_agents}"
            )));
        }
        if steps == 0 || steps > 6 {
            return Err(CoreError::Capacity(format!(
                "tree supports 1..=6 steps, got {steps}"
            )));
        }
        let spec = Self {
            n_agents,
            steps,
            horizon,
            node_cap,
        };
        if spec.leaves() > node_cap {
            return Err(CoreError::Capacity(format!(
                "tree has {} leaves, cap is {node_cap}",
                spec.leaves()
            )));
        }
        Ok(spec)
    }

    /// Branching factor per step: 2^(N+1) sign combinations.
    pub fn branching(&self) -> usize {
        1 << (self.n_agents + 1)
    }

    pub fn leaves(&self) -> usize {
        self.branching().pow(self.steps as u32)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Sign of channel k (0 = common, 1..=N idiosyncratic) in combination s.
    pub fn sign(&self, s: usize, channel: usize) -> f64 {
        if (s >> channel) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// y = gain * x + offset.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub gain: Matrix,
    pub offset: Vector,
}

impl AffineMap {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            gain: Matrix::zeros(rows, cols),
            offset: Vector::zeros(rows),
        }
    }

    pub fn constant(v: Vector, cols: usize) -> Self {
        Self {
            gain: Matrix::zeros(v.len(), cols),
            offset: v,
        }
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        &self.gain * x + &self.offset
    }
}

/// Adapted policy on the tree: per layer (Markov) or per history node.
#[derive(Debug, Clone)]
pub enum TreePolicy {
    PerLayer(Vec<AffineMap>),
    PerNode(Vec<Vec<AffineMap>>),
}

impl TreePolicy {
    pub fn zero(spec: &TreeSpec, rows: usize, cols: usize) -> Self {
        TreePolicy::PerLayer(vec![AffineMap::zero(rows, cols); spec.steps])
    }

    pub fn at(&self, layer: usize, node: usize) -> &AffineMap {
        match self {
            TreePolicy::PerLayer(maps) => &maps[layer],
            TreePolicy::PerNode(layers) => &layers[layer][node],
        }
    }

    pub fn eval(&self, layer: usize, node: usize, x: &Vector) -> Vector {
        self.at(layer, node).eval(x)
    }
}

/// Quadratic 1/2 x^T Pi x + b^T x + c.
#[derive(Debug, Clone)]
pub struct Quad {
    pub pi: Matrix,
    pub b: Vector,
    pub c: f64,
}

impl Quad {
    pub fn zero(dim: usize) -> Self {
        Self {
            pi: Matrix::zeros(dim, dim),
            b: Vector::zeros(dim),
            c: 0.0,
        }
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        0.5 * (x.transpose() * &self.pi * x)[(0, 0)] + self.b.dot(x) + self.c
    }

    /// Pullback through the affine map x = M y + d.
    pub fn compose(&self, m: &Matrix, d: &Vector) -> Quad {
        let pi = symmetrize(&(m.transpose() * &self.pi * m));
        let b = m.transpose() * (&self.pi * d + &self.b);
        let c = 0.5 * (d.transpose() * &self.pi * d)[(0, 0)] + self.b.dot(d) + self.c;
        Quad { pi, b, c }
    }

    pub fn add(&mut self, other: &Quad, weight: f64) {
        self.pi += &other.pi * weight;
        self.b += &other.b * weight;
        self.c += other.c * weight;
    }
}

/// Stacked nN-dimensional coefficients shared by all tree routines.
pub struct CompactDynamics {
    pub n: usize,
    pub r: usize,
    pub n_agents: usize,
    pub a: Matrix,
    pub b: Matrix,
    pub c0: Matrix,
    pub d0: Matrix,
    /// One per agent: only block i carries D.
    pub d_blocks: Vec<Matrix>,
    pub ones: Matrix,
    pub q_hat: Matrix,
    pub g_hat: Matrix,
    pub r_bold: Matrix,
    pub r0: Matrix,
    params: ModelParams,
    derived: DerivedQuantities,
}

impl CompactDynamics {
    pub fn new(p: &ModelParams, d: &DerivedQuantities, n_agents: usize) -> Result<Self> {
        let compact = crate::model::build_compact(p, d, n_agents)?;
        let mut d_blocks = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let mut m = Matrix::zeros(p.n * n_agents, p.r * n_agents);
            m.view_mut((i * p.n, i * p.r), (p.n, p.r)).copy_from(&p.d);
            d_blocks.push(m);
        }
        Ok(Self {
            n: p.n,
            r: p.r,
            n_agents,
            a: block_diag(n_agents, &p.a),
            b: block_diag(n_agents, &p.b),
            c0: block_diag(n_agents, &p.c0),
            d0: block_diag(n_agents, &p.d0),
            d_blocks,
            ones: stacked_identity(n_agents, p.n),
            q_hat: compact.q_hat,
            g_hat: compact.g_hat,
            r_bold: block_diag(n_agents, &p.r_control),
            r0: p.r0.clone(),
            params: p.clone(),
            derived: d.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n * self.n_agents
    }

    pub fn control_dim(&self) -> usize {
        self.r * self.n_agents
    }

    pub fn f_stacked(&self, t: f64) -> Vector {
        &self.ones * self.params.f.eval(t)
    }

    pub fn sigma_agent(&self, t: f64, agent: usize) -> Vector {
        let mut v = Vector::zeros(self.dim());
        v.rows_mut(agent * self.n, self.n)
            .copy_from(&self.params.sigma.eval(t));
        v
    }

    /// eta_hat(t) = 1 (x) Xi2(t).
    pub fn eta_hat(&self, t: f64) -> Vector {
        &self.ones * self.derived.xi2(&self.params, t)
    }

    pub fn eta0_hat(&self) -> Vector {
        &self.ones * &self.derived.xi2_g
    }

    /// Running-cost constant (N/2)|eta(t)|^2_Q.
    pub fn running_const(&self, t: f64) -> f64 {
        let eta = self.params.eta.eval(t);
        0.5 * self.n_agents as f64 * (eta.transpose() * &self.params.q * &eta)[(0, 0)]
    }

    pub fn terminal_const(&self) -> f64 {
        let eta0 = &self.params.eta0;
        0.5 * self.n_agents as f64 * (eta0.transpose() * &self.params.g * eta0)[(0, 0)]
    }

    /// Terminal cost quad 1/2 x^T G_hat x - eta0_hat^T x + const.
    pub fn terminal_quad(&self) -> Quad {
        Quad {
            pi: self.g_hat.clone(),
            b: -self.eta0_hat(),
            c: self.terminal_const(),
        }
    }

    /// Stage cost (already scaled by dt) as a quad over stacked (x, u, s0).
    fn stage_quad(&self, t: f64, dt: f64) -> Quad {
        let (nx, nu, ns) = (self.dim(), self.control_dim(), self.n);
        let dim = nx + nu + ns;
        let mut pi = Matrix::zeros(dim, dim);
        pi.view_mut((0, 0), (nx, nx)).copy_from(&(&self.q_hat * dt));
        pi.view_mut((nx, nx), (nu, nu))
            .copy_from(&(&self.r_bold * dt));
        pi.view_mut((nx + nu, nx + nu), (ns, ns))
            .copy_from(&(&self.r0 * (-(self.n_agents as f64) * dt)));
        let mut b = Vector::zeros(dim);
        b.rows_mut(0, nx).copy_from(&(-self.eta_hat(t) * dt));
        Quad {
            pi,
            b,
            c: self.running_const(t) * dt,
        }
    }

    /// Child state as an affine map of stacked (x, u, s0) for sign combo s:
    /// x' = x + (A x + B u + f) dt + sum_i (D_i u + sigma_i) xi_i sqrt(dt)
    ///        + (C0 x + D0 u + 1 s0) xi_0 sqrt(dt).
    fn child_map(&self, spec: &TreeSpec, t: f64, s: usize) -> (Matrix, Vector) {
        let dt = spec.dt();
        let sq = dt.sqrt();
        let (nx, nu, ns) = (self.dim(), self.control_dim(), self.n);
        let xi0 = spec.sign(s, 0);
        let mx = Matrix::identity(nx, nx) + &self.a * dt + &self.c0 * (xi0 * sq);
        let mut mu = &self.b * dt + &self.d0 * (xi0 * sq);
        let msig = &self.ones * (xi0 * sq);
        let mut dvec = self.f_stacked(t) * dt;
        for i in 0..self.n_agents {
            let xi = spec.sign(s, i + 1);
            mu += &self.d_blocks[i] * (xi * sq);
            dvec += self.sigma_agent(t, i) * (xi * sq);
        }
        let mut m = Matrix::zeros(nx, nx + nu + ns);
        m.view_mut((0, 0), (nx, nx)).copy_from(&mx);
        m.view_mut((0, nx), (nx, nu)).copy_from(&mu);
        m.view_mut((0, nx + nu), (nx, ns)).copy_from(&msig);
        (m, dvec)
    }

    /// Exact expectation of `child_value` over the 2^(N+1) sign combinations,
    /// expressed as a quad over stacked (x, u, s0).
    fn expected_child_quad(
        &self,
        spec: &TreeSpec,
        t: f64,
        child_value: &dyn Fn(usize) -> Quad,
    ) -> Quad {
        let branch = spec.branching();
        let weight = 1.0 / branch as f64;
        let dim = self.dim() + self.control_dim() + self.n;
        let mut out = Quad::zero(dim);
        for s in 0..branch {
            let (m, dvec) = self.child_map(spec, t, s);
            let composed = child_value(s).compose(&m, &dvec);
            out.add(&composed, weight);
        }
        out
    }
}

/// Decision-relevant blocks of a quad over stacked (x, u, s0).
struct DecisionBlocks {
    pxu: Matrix,
    pxs: Matrix,
    puu: Matrix,
    pus: Matrix,
    pss: Matrix,
    bu: Vector,
    bs: Vector,
}

fn decision_blocks(dyns: &CompactDynamics, q: &Quad) -> DecisionBlocks {
    let (nx, nu, ns) = (dyns.dim(), dyns.control_dim(), dyns.n);
    DecisionBlocks {
        pxu: q.pi.view((0, nx), (nx, nu)).into(),
        pxs: q.pi.view((0, nx + nu), (nx, ns)).into(),
        puu: q.pi.view((nx, nx), (nu, nu)).into(),
        pus: q.pi.view((nx, nx + nu), (nu, ns)).into(),
        pss: q.pi.view((nx + nu, nx + nu), (ns, ns)).into(),
        bu: q.b.rows(nx, nu).into(),
        bs: q.b.rows(nx + nu, ns).into(),
    }
}

/// Saddle-point result on the tree.
pub struct MinmaxResult {
    pub value: f64,
    pub control: TreePolicy,
    pub adversary: TreePolicy,
    /// Value quadratics per layer, layer 0 first.
    pub layer_values: Vec<Quad>,
}

/// Exact min over adapted controls of max over adapted volatility, by
/// backward induction. Refuses instances whose per-node second-order
/// conditions (inner strictly concave, reduced outer strictly convex) fail.
pub fn tree_minmax(p: &ModelParams, d: &DerivedQuantities, spec: &TreeSpec) -> Result<MinmaxResult> {
    let dyns = CompactDynamics::new(p, d, spec.n_agents)?;
    let (nx, nu, ns) = (dyns.dim(), dyns.control_dim(), dyns.n);
    let dt = spec.dt();

    let mut value = dyns.terminal_quad();
    let mut layer_values = vec![Quad::zero(nx); spec.steps + 1];
    layer_values[spec.steps] = value.clone();
    let mut control_maps = vec![AffineMap::zero(nu, nx); spec.steps];
    let mut adversary_maps = vec![AffineMap::zero(ns, nx); spec.steps];

    for m in (0..spec.steps).rev() {
        let t = dt * m as f64;
        let child = value.clone();
        let mut w = dyns.expected_child_quad(spec, t, &|_| child.clone());
        w.add(&dyns.stage_quad(t, dt), 1.0);

        let blocks = decision_blocks(&dyns, &w);
        let (pxu, pxs, puu, pus, pss, bu, bs) = (
            blocks.pxu,
            blocks.pxs,
            blocks.puu,
            blocks.pus,
            blocks.pss,
            blocks.bu,
            blocks.bs,
        );

        // Inner problem must be strictly concave in s0.
        let inner_margin = min_eig(&(-&pss))?;
        if inner_margin < HESSIAN_MARGIN {
            return Err(CoreError::Saddle(format!(
                "inner Hessian not negative definite at layer {m} (margin {inner_margin:.3e})"
            )));
        }
        // Reduced outer problem must be strictly convex in u.
        let pss_lu = pss.clone().lu();
        let pss_inv_pus_t = pss_lu
            .solve(&pus.transpose())
            .ok_or_else(|| CoreError::Singular("inner Hessian solve".into()))?;
        let schur = &puu - &pus * &pss_inv_pus_t;
        let outer_margin = min_eig(&symmetrize(&schur))?;
        if outer_margin < HESSIAN_MARGIN {
            return Err(CoreError::Saddle(format!(
                "outer Hessian not positive definite at layer {m} (margin {outer_margin:.3e})"
            )));
        }

        // Joint stationary point: [puu pus; pus^T pss] [u; s0] = -[rhs].
        let mut h = Matrix::zeros(nu + ns, nu + ns);
        h.view_mut((0, 0), (nu, nu)).copy_from(&puu);
        h.view_mut((0, nu), (nu, ns)).copy_from(&pus);
        h.view_mut((nu, 0), (ns, nu)).copy_from(&pus.transpose());
        h.view_mut((nu, nu), (ns, ns)).copy_from(&pss);
        let mut gain_rhs = Matrix::zeros(nu + ns, nx);
        gain_rhs.view_mut((0, 0), (nu, nx)).copy_from(&pxu.transpose());
        gain_rhs.view_mut((nu, 0), (ns, nx)).copy_from(&pxs.transpose());
        let mut off_rhs = Vector::zeros(nu + ns);
        off_rhs.rows_mut(0, nu).copy_from(&bu);
        off_rhs.rows_mut(nu, ns).copy_from(&bs);

        let h_lu = h.lu();
        let gains = h_lu
            .solve(&(-gain_rhs))
            .ok_or_else(|| CoreError::Singular("joint saddle system".into()))?;
        let offsets = h_lu
            .solve(&(-off_rhs))
            .ok_or_else(|| CoreError::Singular("joint saddle system".into()))?;

        let ku: Matrix = gains.view((0, 0), (nu, nx)).into();
        let ks: Matrix = gains.view((nu, 0), (ns, nx)).into();
        let cu: Vector = offsets.rows(0, nu).into();
        let cs: Vector = offsets.rows(nu, ns).into();

        // Substitute the affine saddle into the stacked quad.
        let mut sub = Matrix::zeros(nx + nu + ns, nx);
        sub.view_mut((0, 0), (nx, nx))
            .copy_from(&Matrix::identity(nx, nx));
        sub.view_mut((nx, 0), (nu, nx)).copy_from(&ku);
        sub.view_mut((nx + nu, 0), (ns, nx)).copy_from(&ks);
        let mut shift = Vector::zeros(nx + nu + ns);
        shift.rows_mut(nx, nu).copy_from(&cu);
        shift.rows_mut(nx + nu, ns).copy_from(&cs);
        value = w.compose(&sub, &shift);

        layer_values[m] = value.clone();
        control_maps[m] = AffineMap {
            gain: ku,
            offset: cu,
        };
        adversary_maps[m] = AffineMap {
            gain: ks,
            offset: cs,
        };
    }

    let x0 = &dyns.ones * &p.x0;
    Ok(MinmaxResult {
        value: value.eval(&x0),
        control: TreePolicy::PerLayer(control_maps),
        adversary: TreePolicy::PerLayer(adversary_maps),
        layer_values,
    })
}

pub struct InnerSupResult {
    pub value: f64,
    pub argmax: TreePolicy,
}

/// Exact maximizer of the social cost over adapted volatility policies for a
/// fixed (affine-per-node) control policy. Value functions are per history
/// node because the control policy may be.
pub fn tree_inner_sup(
    p: &ModelParams,
    d: &DerivedQuantities,
    spec: &TreeSpec,
    control: &TreePolicy,
) -> Result<InnerSupResult> {
    let dyns = CompactDynamics::new(p, d, spec.n_agents)?;
    let (nx, nu, ns) = (dyns.dim(), dyns.control_dim(), dyns.n);
    let dt = spec.dt();
    let branch = spec.branching();

    // Per-node value quadratics of the layer currently being consumed; the
    // terminal layer shares a single quadratic.
    let terminal = dyns.terminal_quad();
    let mut values: Vec<Quad> = Vec::new();
    let mut argmax_layers: Vec<Vec<AffineMap>> = vec![Vec::new(); spec.steps];

    for m in (0..spec.steps).rev() {
        let t = dt * m as f64;
        let node_count = branch.pow(m as u32);
        let consuming_terminal = m + 1 == spec.steps;
        let mut new_values = Vec::with_capacity(node_count);
        let mut maps = Vec::with_capacity(node_count);
        for node in 0..node_count {
            let child = |s: usize| -> Quad {
                if consuming_terminal {
                    terminal.clone()
                } else {
                    values[node * branch + s].clone()
                }
            };
            let mut w = dyns.expected_child_quad(spec, t, &child);
            w.add(&dyns.stage_quad(t, dt), 1.0);

            // Substitute the given control u = Ku x + cu: stacked variable
            // becomes (x, s0).
            let policy = control.at(m, node);
            let mut sub = Matrix::zeros(nx + nu + ns, nx + ns);
            sub.view_mut((0, 0), (nx, nx))
                .copy_from(&Matrix::identity(nx, nx));
            sub.view_mut((nx, 0), (nu, nx)).copy_from(&policy.gain);
            sub.view_mut((nx + nu, nx), (ns, ns))
                .copy_from(&Matrix::identity(ns, ns));
            let mut shift = Vector::zeros(nx + nu + ns);
            shift.rows_mut(nx, nu).copy_from(&policy.offset);
            let wxs = w.compose(&sub, &shift);

            // Maximize over s0.
            let pss: Matrix = wxs.pi.view((nx, nx), (ns, ns)).into();
            let margin = min_eig(&(-&pss))?;
            if margin < HESSIAN_MARGIN {
                return Err(CoreError::InnerUnbounded { layer: m, node });
            }
            let pxs: Matrix = wxs.pi.view((0, nx), (nx, ns)).into();
            let bs: Vector = wxs.b.rows(nx, ns).into();
            let pss_lu = pss.lu();
            let gain = pss_lu
                .solve(&(-pxs.transpose()))
                .ok_or_else(|| CoreError::Singular("inner argmax solve".into()))?;
            let offset = pss_lu
                .solve(&(-bs))
                .ok_or_else(|| CoreError::Singular("inner argmax solve".into()))?;

            let mut sub2 = Matrix::zeros(nx + ns, nx);
            sub2.view_mut((0, 0), (nx, nx))
                .copy_from(&Matrix::identity(nx, nx));
            sub2.view_mut((nx, 0), (ns, nx)).copy_from(&gain);
            let mut shift2 = Vector::zeros(nx + ns);
            shift2.rows_mut(nx, ns).copy_from(&offset);
            new_values.push(wxs.compose(&sub2, &shift2));
            maps.push(AffineMap { gain, offset });
        }
        values = new_values;
        argmax_layers[m] = maps;
    }

    let x0 = &dyns.ones * &p.x0;
    Ok(InnerSupResult {
        value: values[0].eval(&x0),
        argmax: TreePolicy::PerNode(argmax_layers),
    })
}

/// Exact expectation of the social cost under given control and volatility
/// policies, by full enumeration over the tree leaves.
pub fn tree_evaluate(
    p: &ModelParams,
    d: &DerivedQuantities,
    spec: &TreeSpec,
    control: &TreePolicy,
    adversary: &TreePolicy,
) -> Result<f64> {
    let dyns = CompactDynamics::new(p, d, spec.n_agents)?;
    let dt = spec.dt();
    let branch = spec.branching();
    let x0 = &dyns.ones * &p.x0;

    // Depth-first accumulation over all sign paths.
    struct Frame<'a> {
        dyns: &'a CompactDynamics,
        spec: &'a TreeSpec,
        control: &'a TreePolicy,
        adversary: &'a TreePolicy,
        dt: f64,
        branch: usize,
    }
    fn walk(fr: &Frame, m: usize, node: usize, x: &Vector, acc: f64) -> f64 {
        if m == fr.spec.steps {
            return acc + fr.dyns.terminal_quad().eval(x);
        }
        let t = fr.dt * m as f64;
        let u = fr.control.eval(m, node, x);
        let s0 = fr.adversary.eval(m, node, x);
        let stage = {
            // dt [ 1/2 x^T Qhat x - eta_hat^T x + running_const
            //      + 1/2 u^T R u - (N/2) |s0|^2_{R0} ]
            let xq = 0.5 * (x.transpose() * &fr.dyns.q_hat * x)[(0, 0)];
            let uq = 0.5 * (u.transpose() * &fr.dyns.r_bold * &u)[(0, 0)];
            let sq = 0.5 * fr.dyns.n_agents as f64 * (s0.transpose() * &fr.dyns.r0 * &s0)[(0, 0)];
            fr.dt * (xq - fr.dyns.eta_hat(t).dot(x) + fr.dyns.running_const(t) + uq - sq)
        };
        let sqdt = fr.dt.sqrt();
        let mut total = 0.0;
        let weight = 1.0 / fr.branch as f64;
        for s in 0..fr.branch {
            let xi0 = fr.spec.sign(s, 0);
            let mut next = x
                + (&fr.dyns.a * x + &fr.dyns.b * &u + fr.dyns.f_stacked(t)) * fr.dt
                + (&fr.dyns.c0 * x + &fr.dyns.d0 * &u + &fr.dyns.ones * &s0) * (xi0 * sqdt);
            for i in 0..fr.dyns.n_agents {
                let xi = fr.spec.sign(s, i + 1);
                next += (&fr.dyns.d_blocks[i] * &u + fr.dyns.sigma_agent(t, i)) * (xi * sqdt);
            }
            total += weight * walk(fr, m + 1, node * fr.branch + s, &next, acc + stage);
        }
        total
    }

    let fr = Frame {
        dyns: &dyns,
        spec,
        control,
        adversary,
        dt,
        branch,
    };
    Ok(walk(&fr, 0, 0, &x0, 0.0))
}

/// Zero-offset copy of the instance: x0 = 0 and f = sigma = eta = eta0 = 0.
pub fn zeroed_instance(p: &ModelParams) -> ModelParams {
    let mut z = p.clone();
    z.x0 = Vector::zeros(p.n);
    z.f = crate::model::OffsetFn::zero(p.n);
    z.sigma = crate::model::OffsetFn::zero(p.n);
    z.eta = crate::model::OffsetFn::zero(p.n);
    z.eta0 = Vector::zeros(p.n);
    z
}

/// Homogeneous functional: the worst-case social cost of `control` on the
/// zero-offset, zero-initial-state system. Evaluated by running the inner
/// argmax forward through the leaf enumeration, which must (and in tests
/// does) reproduce the backward-induction value.
pub fn eval_j0_soc(p: &ModelParams, spec: &TreeSpec, control: &TreePolicy) -> Result<f64> {
    let z = zeroed_instance(p);
    let dz = crate::model::derive_offsets(&z)?;
    let sup = tree_inner_sup(&z, &dz, spec, control)?;
    tree_evaluate(&z, &dz, spec, control, &sup.argmax)
}
