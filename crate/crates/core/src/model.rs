//! Problem instance definition: agent dynamics
//! dx_i = (A x_i + B u_i + f)dt + (D u_i + sigma)dW_i + (C0 x_i + D0 u_i + sigma0)dW_0
//! with quadratic per-agent cost coupling through the state average, a soft
//! constraint -1/2 |sigma0|^2_{R0} on the volatility adversary, baseline
//! hypothesis validation, derived offset quantities, and the compact
//! N-agent matrices.

use crate::error::{CoreError, Result};
use crate::numerics::{min_eig, symmetry_defect, Matrix, TimeGrid, Vector};
use serde::Serialize;

/// Deterministic vector-valued function of time: either constant or sampled
/// on a grid (piecewise linear between nodes).
#[derive(Debug, Clone)]
pub enum OffsetFn {
    Constant(Vector),
    Sampled { horizon: f64, samples: Vec<Vector> },
}

impl OffsetFn {
    pub fn zero(n: usize) -> Self {
        OffsetFn::Constant(Vector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        match self {
            OffsetFn::Constant(v) => v.len(),
            OffsetFn::Sampled { samples, .. } => samples[0].len(),
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        match self {
            OffsetFn::Constant(v) => v.clone(),
            OffsetFn::Sampled { horizon, samples } => {
                let m = samples.len() - 1;
                if m == 0 {
                    return samples[0].clone();
                }
                let s = (t / horizon).clamp(0.0, 1.0) * m as f64;
                let lo = (s.floor() as usize).min(m - 1);
                let w = s - lo as f64;
                &samples[lo] * (1.0 - w) + &samples[lo + 1] * w
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            OffsetFn::Constant(v) => v.iter().all(|x| *x == 0.0),
            OffsetFn::Sampled { samples, .. } => {
                samples.iter().all(|v| v.iter().all(|x| *x == 0.0))
            }
        }
    }
}

/// Full coefficient tuple of the model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub n: usize,
    pub r: usize,
    pub a: Matrix,
    pub b: Matrix,
    pub d: Matrix,
    pub c0: Matrix,
    pub d0: Matrix,
    pub q: Matrix,
    pub r_control: Matrix,
    pub r0: Matrix,
    pub g: Matrix,
    pub gamma: Matrix,
    pub gamma0: Matrix,
    pub f: OffsetFn,
    pub sigma: OffsetFn,
    pub eta: OffsetFn,
    pub eta0: Vector,
    pub x0: Vector,
    pub horizon: f64,
}

impl ModelParams {
    /// Dimension checks that must hold before anything else runs.
    pub fn check_dims(&self) -> Result<()> {
        let n = self.n;
        let r = self.r;
        let square_n: [(&str, &Matrix); 7] = [
            ("A", &self.a),
            ("C0", &self.c0),
            ("Q", &self.q),
            ("R0", &self.r0),
            ("G", &self.g),
            ("Gamma", &self.gamma),
            ("Gamma0", &self.gamma0),
        ];
        for (name, m) in square_n {
            if m.nrows() != n || m.ncols() != n {
                return Err(CoreError::Dimension(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        for (name, m) in [("B", &self.b), ("D", &self.d), ("D0", &self.d0)] {
            if m.nrows() != n || m.ncols() != r {
                return Err(CoreError::Dimension(format!(
                    "{name} must be {n}x{r}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if self.r_control.nrows() != r || self.r_control.ncols() != r {
            return Err(CoreError::Dimension(format!(
                "R must be {r}x{r}, got {}x{}",
                self.r_control.nrows(),
                self.r_control.ncols()
            )));
        }
        for (name, v) in [("eta0", &self.eta0), ("x0", &self.x0)] {
            if v.len() != n {
                return Err(CoreError::Dimension(format!(
                    "{name} must have length {n}, got {}",
                    v.len()
                )));
            }
        }
        for (name, f) in [("f", &self.f), ("sigma", &self.sigma), ("eta", &self.eta)] {
            if f.dim() != n {
                return Err(CoreError::Dimension(format!(
                    "{name} must have dimension {n}, got {}",
                    f.dim()
                )));
            }
        }
        if !(self.horizon > 0.0) {
            return Err(CoreError::Invalid("horizon T must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self, steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, steps)
    }
}

/// One named constraint of the baseline hypothesis with its margin.
#[derive(Debug, Clone, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub ok: bool,
    /// Smallest eigenvalue (definiteness checks) or negated defect
    /// (symmetry checks); positive means satisfied with room.
    pub margin: f64,
}

/// Outcome of `validate_h1`. Failures are reported, never thrown.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn violated(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.ok)
            .map(|c| c.name.as_str())
            .collect()
    }
}

const SYM_TOL: f64 = 1e-10;
const STRICT_POS: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;

/// Check the standing coefficient hypothesis: Q >= 0, R > 0, R0 > 0, G >= 0,
/// symmetric weights, positive horizon, consistent dimensions.
pub fn validate_h1(p: &ModelParams) -> Result<ValidationReport> {
    p.check_dims()?;
    let mut checks = Vec::new();

    let mut sym_check = |name: &str, m: &Matrix| {
        let defect = symmetry_defect(m);
        let scale = m.amax().max(1.0);
        checks.push(ConstraintCheck {
            name: format!("{name} symmetric"),
            ok: defect <= SYM_TOL * scale,
            margin: -defect,
        });
    };
    sym_check("Q", &p.q);
    sym_check("R", &p.r_control);
    sym_check("R0", &p.r0);
    sym_check("G", &p.g);

    let eig_of = |m: &Matrix| min_eig(&crate::numerics::symmetrize(m));
    let psd = |name: &str, m: &Matrix, checks: &mut Vec<ConstraintCheck>| -> Result<()> {
        let lam = eig_of(m)?;
        checks.push(ConstraintCheck {
            name: format!("{name} >= 0"),
            ok: lam >= PSD_TOL,
            margin: lam,
        });
        Ok(())
    };
    let pd = |name: &str, m: &Matrix, checks: &mut Vec<ConstraintCheck>| -> Result<()> {
        let lam = eig_of(m)?;
        checks.push(ConstraintCheck {
            name: format!("{name} > 0"),
            ok: lam > STRICT_POS,
            margin: lam,
        });
        Ok(())
    };
    psd("Q", &p.q, &mut checks)?;
    pd("R", &p.r_control, &mut checks)?;
    pd("R0", &p.r0, &mut checks)?;
    psd("G", &p.g, &mut checks)?;

    checks.push(ConstraintCheck {
        name: "T > 0".into(),
        ok: p.horizon > 0.0,
        margin: p.horizon,
    });

    Ok(ValidationReport {
        ok: checks.iter().all(|c| c.ok),
        checks,
    })
}

/// Closed-form offsets derived from the coupling matrices:
/// Xi1 = Gamma^T Q + Q Gamma - Gamma^T Q Gamma (and the G-analogue),
/// Xi2(t) = Q eta(t) - Gamma^T Q eta(t) (and the G-analogue), plus
/// IG = [I + R0^{-1}(G - Xi1G)]^{-1}.
#[derive(Debug, Clone)]
pub struct DerivedQuantities {
    pub xi1: Matrix,
    pub xi1_g: Matrix,
    pub xi2_g: Vector,
    pub ig: Matrix,
    /// G - Xi1G appears everywhere in the strategy synthesis.
    pub g_minus_xi1g: Matrix,
    q_minus_gtq: Matrix,
}

impl DerivedQuantities {
    /// Xi2(t) = (Q - Gamma^T Q) eta(t), evaluated pointwise.
    pub fn xi2(&self, p: &ModelParams, t: f64) -> Vector {
        &self.q_minus_gtq * p.eta.eval(t)
    }
}

pub fn derive_offsets(p: &ModelParams) -> Result<DerivedQuantities> {
    let xi1 = p.gamma.transpose() * &p.q + &p.q * &p.gamma - p.gamma.transpose() * &p.q * &p.gamma;
    let xi1_g =
        p.gamma0.transpose() * &p.g + &p.g * &p.gamma0 - p.gamma0.transpose() * &p.g * &p.gamma0;
    let xi2_g = (&p.g - p.gamma0.transpose() * &p.g) * &p.eta0;
    let g_minus_xi1g = &p.g - &xi1_g;

    let r0_lu = p.r0.clone().lu();
    let r0_inv_term = r0_lu
        .solve(&g_minus_xi1g)
        .ok_or_else(|| CoreError::Singular("R0 in IG assembly".into()))?;
    let to_invert = Matrix::identity(p.n, p.n) + r0_inv_term;
    let ig = to_invert
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::Singular("I + R0^{-1}(G - Xi1G) is not invertible".into()))?;

    // Contract: IG * (I + R0^{-1}(G - Xi1G)) = I to 1e-10.
    let defect = (&ig * &to_invert - Matrix::identity(p.n, p.n)).amax();
    if defect > 1e-10 {
        return Err(CoreError::Singular(format!(
            "IG inverse defect {defect:.3e} exceeds 1e-10"
        )));
    }

    let q_minus_gtq = &p.q - p.gamma.transpose() * &p.q;
    Ok(DerivedQuantities {
        xi1,
        xi1_g,
        xi2_g,
        ig,
        g_minus_xi1g,
        q_minus_gtq,
    })
}

/// Compact nN-dimensional matrices of the pooled problem.
#[derive(Debug, Clone)]
pub struct CompactModel {
    pub n_agents: usize,
    pub q_hat: Matrix,
    pub g_hat: Matrix,
    /// eta_hat(t) = 1 (x) Xi2(t); the constant terminal analogue is
    /// eta0_hat = 1 (x) Xi2G.
    pub eta0_hat: Vector,
}

/// Hard cap so dense nN-dimensional solves stay cheap.
pub const DEFAULT_COMPACT_CAP: usize = 64;

fn block_coupled(n: usize, n_agents: usize, diag: &Matrix, coupling: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(n * n_agents, n * n_agents);
    let scaled = coupling / n_agents as f64;
    for i in 0..n_agents {
        for j in 0..n_agents {
            let mut view = out.view_mut((i * n, j * n), (n, n));
            if i == j {
                view.copy_from(&(diag - &scaled));
            } else {
                view.copy_from(&(-&scaled));
            }
        }
    }
    out
}

/// Kronecker helper: I_N (x) m.
pub fn block_diag(n_agents: usize, m: &Matrix) -> Matrix {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Matrix::zeros(r * n_agents, c * n_agents);
    for i in 0..n_agents {
        out.view_mut((i * r, i * c), (r, c)).copy_from(m);
    }
    out
}

/// Stacked identity 1 (x) I_n of shape (n N) x n.
pub fn stacked_identity(n_agents: usize, n: usize) -> Matrix {
    let mut out = Matrix::zeros(n * n_agents, n);
    for i in 0..n_agents {
        out.view_mut((i * n, 0), (n, n))
            .copy_from(&Matrix::identity(n, n));
    }
    out
}

/// Block map for agent i: [-Gamma/N, ..., I - Gamma/N, ..., -Gamma/N].
pub fn gamma_block(p: &ModelParams, n_agents: usize, agent: usize) -> Matrix {
    let n = p.n;
    let mut out = Matrix::zeros(n, n * n_agents);
    let scaled = &p.gamma / n_agents as f64;
    for j in 0..n_agents {
        let mut view = out.view_mut((0, j * n), (n, n));
        if j == agent {
            view.copy_from(&(Matrix::identity(n, n) - &scaled));
        } else {
            view.copy_from(&(-&scaled));
        }
    }
    out
}

pub fn build_compact(p: &ModelParams, d: &DerivedQuantities, n_agents: usize) -> Result<CompactModel> {
    if n_agents == 0 {
        return Err(CoreError::Invalid("need at least one agent".into()));
    }
    if p.n * n_agents > DEFAULT_COMPACT_CAP {
        return Err(CoreError::Capacity(format!(
            "compact model dimension {} exceeds cap {}",
            p.n * n_agents,
            DEFAULT_COMPACT_CAP
        )));
    }
    let q_hat = block_coupled(p.n, n_agents, &p.q, &d.xi1);
    let g_hat = block_coupled(p.n, n_agents, &p.g, &d.xi1_g);
    let eta0_hat = stacked_identity(n_agents, p.n) * &d.xi2_g;
    Ok(CompactModel {
        n_agents,
        q_hat,
        g_hat,
        eta0_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::reference_instance;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn h1_accepts_reference_instance() {
        let p = reference_instance();
        let report = validate_h1(&p).unwrap();
        assert!(report.ok, "violations: {:?}", report.violated());
    }

    #[test]
    fn h1_rejects_singular_r() {
        let mut p = reference_instance();
        p.r_control = Matrix::zeros(1, 1);
        let report = validate_h1(&p).unwrap();
        assert!(!report.ok);
        assert!(report.violated().contains(&"R > 0"));
    }

    #[test]
    fn h1_rejects_indefinite_q() {
        let mut p = reference_instance();
        p.q = dmatrix![-0.1, 0.0; 0.0, 0.4];
        let report = validate_h1(&p).unwrap();
        assert!(report.violated().contains(&"Q >= 0"));
    }

    #[test]
    fn offsets_vanish_with_zero_gamma() {
        let mut p = reference_instance();
        p.gamma = Matrix::zeros(2, 2);
        p.eta = OffsetFn::Constant(dvector![1.0, -2.0]);
        let d = derive_offsets(&p).unwrap();
        assert_eq!(d.xi1, Matrix::zeros(2, 2));
        let xi2 = d.xi2(&p, 0.3);
        let expected = &p.q * dvector![1.0, -2.0];
        assert!((xi2 - expected).amax() < 1e-14);
    }

    #[test]
    fn reference_offsets_match_hand_computation() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        // Xi1 = diag(1, 0.3) so Xi1 - Q = diag(0, -0.1).
        let expected = dmatrix![1.0, 0.0; 0.0, 0.3];
        assert!((&d.xi1 - expected).amax() < 1e-14);
        let ahat_core = &d.xi1 - &p.q;
        assert!((ahat_core - dmatrix![0.0, 0.0; 0.0, -0.1]).amax() < 1e-14);
        assert_eq!(d.xi1_g, Matrix::zeros(2, 2));
    }

    #[test]
    fn ig_is_identity_when_g_zero() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        assert!((&d.ig - Matrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn ig_contract_holds_with_nonzero_g() {
        let mut p = reference_instance();
        p.g = dmatrix![0.5, 0.1; 0.1, 0.8];
        p.gamma0 = dmatrix![0.3, 0.0; 0.0, 0.2];
        let d = derive_offsets(&p).unwrap();
        let check = &d.ig
            * (Matrix::identity(2, 2)
                + p.r0.clone().lu().solve(&d.g_minus_xi1g).unwrap());
        assert!((check - Matrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn xi_symmetry() {
        let mut p = reference_instance();
        p.g = dmatrix![0.5, 0.1; 0.1, 0.8];
        p.gamma0 = dmatrix![0.3, 0.05; 0.02, 0.2];
        p.gamma = dmatrix![0.9, -0.2; 0.1, 0.5];
        let d = derive_offsets(&p).unwrap();
        assert!(symmetry_defect(&d.xi1) < 1e-12);
        assert!(symmetry_defect(&d.xi1_g) < 1e-12);
    }

    #[test]
    fn compact_single_agent_collapses() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let c = build_compact(&p, &d, 1).unwrap();
        assert!((&c.q_hat - (&p.q - &d.xi1)).amax() < 1e-14);
    }

    #[test]
    fn compact_blocks_decouple_without_gamma() {
        let mut p = reference_instance();
        p.gamma = Matrix::zeros(2, 2);
        p.gamma0 = Matrix::zeros(2, 2);
        let d = derive_offsets(&p).unwrap();
        let c = build_compact(&p, &d, 3).unwrap();
        let expected = block_diag(3, &p.q);
        assert!((&c.q_hat - expected).amax() < 1e-14);
        let expected_g = block_diag(3, &p.g);
        assert!((&c.g_hat - expected_g).amax() < 1e-14);
    }

    #[test]
    fn compact_matches_gamma_block_expansion() {
        // Q_hat must equal sum_i Gamma_i^T Q Gamma_i, assembled independently.
        let mut p = reference_instance();
        p.gamma = dmatrix![0.7, 0.2; -0.1, 0.4];
        let d = derive_offsets(&p).unwrap();
        let n_agents = 3;
        let c = build_compact(&p, &d, n_agents).unwrap();
        let mut direct = Matrix::zeros(p.n * n_agents, p.n * n_agents);
        for i in 0..n_agents {
            let gi = gamma_block(&p, n_agents, i);
            direct += gi.transpose() * &p.q * gi;
        }
        assert!((&c.q_hat - &direct).amax() < 1e-10);
    }

    #[test]
    fn compact_sandwich_bound() {
        for n_agents in [1usize, 2, 4] {
            let mut p = reference_instance();
            p.gamma = dmatrix![0.7, 0.2; -0.1, 0.4];
            let d = derive_offsets(&p).unwrap();
            let c = build_compact(&p, &d, n_agents).unwrap();
            let mut gram = Matrix::zeros(p.n * n_agents, p.n * n_agents);
            for i in 0..n_agents {
                let gi = gamma_block(&p, n_agents, i);
                gram += gi.transpose() * gi;
            }
            let lam_min = min_eig(&p.q).unwrap();
            let lam_max = -min_eig(&(-&p.q)).unwrap();
            let lower = &c.q_hat - &gram * lam_min;
            let upper = &gram * lam_max - &c.q_hat;
            assert!(min_eig(&lower).unwrap() > -1e-9);
            assert!(min_eig(&upper).unwrap() > -1e-9);
        }
    }

    #[test]
    fn compact_capacity_cap() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        assert!(matches!(
            build_compact(&p, &d, 40),
            Err(CoreError::Capacity(_))
        ));
    }

    #[test]
    fn offset_homogeneity_degree_one() {
        // Scaling (Q, G, R0) jointly by c scales the Xi quantities by c and
        // leaves IG unchanged.
        let mut p = reference_instance();
        p.g = dmatrix![0.5, 0.1; 0.1, 0.8];
        p.gamma0 = dmatrix![0.3, 0.0; 0.0, 0.2];
        p.eta0 = dvector![0.4, -0.3];
        let d1 = derive_offsets(&p).unwrap();
        let c = 3.7;
        let mut scaled = p.clone();
        scaled.q *= c;
        scaled.g *= c;
        scaled.r0 *= c;
        let d2 = derive_offsets(&scaled).unwrap();
        assert!((&d2.xi1 - &d1.xi1 * c).amax() < 1e-12);
        assert!((&d2.xi1_g - &d1.xi1_g * c).amax() < 1e-12);
        assert!((&d2.xi2_g - &d1.xi2_g * c).amax() < 1e-12);
        assert!((&d2.ig - &d1.ig).amax() < 1e-12);
    }

    #[test]
    fn sampled_offset_interpolates() {
        let f = OffsetFn::Sampled {
            horizon: 1.0,
            samples: vec![dvector![0.0], dvector![1.0], dvector![4.0]],
        };
        assert!((f.eval(0.25)[0] - 0.5).abs() < 1e-15);
        assert!((f.eval(0.75)[0] - 2.5).abs() < 1e-15);
        assert_eq!(f.eval(1.0)[0], 4.0);
    }
}
