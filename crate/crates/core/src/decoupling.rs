//! Reduction-decoupling machinery for the fully coupled (h, y, z) system:
//! the block transition matrix Psi1, the alternating Lambda-series for its
//! lower-left block, and the two solvability conditions they induce.

use crate::error::{CoreError, Result};
use crate::model::{DerivedQuantities, ModelParams};
use crate::numerics::{mat_exp, min_singular_value, Matrix, TimeGrid};
use serde::Serialize;

/// Ahat = (Xi1 - Q) + A^T (G - Xi1G) + (G - Xi1G) A + C0^T (G - Xi1G) IG C0.
#[derive(Debug, Clone)]
pub struct AhatMatrix {
    pub value: Matrix,
}

pub fn build_ahat(d: &DerivedQuantities, p: &ModelParams) -> AhatMatrix {
    let gm = &d.g_minus_xi1g;
    let value = (&d.xi1 - &p.q)
        + p.a.transpose() * gm
        + gm * &p.a
        + p.c0.transpose() * gm * &d.ig * &p.c0;
    AhatMatrix { value }
}

/// Block transition matrix
/// Psi1(t, s) = exp([[A, 0], [Ahat, -A^T]] (t - s))
///            = [[e^{A(t-s)}, 0], [S(t-s), e^{-A^T (t-s)}]].
#[derive(Debug, Clone)]
pub struct Psi1Block {
    pub full: Matrix,
    n: usize,
}

impl Psi1Block {
    pub fn upper_left(&self) -> Matrix {
        self.full.view((0, 0), (self.n, self.n)).into()
    }

    pub fn upper_right(&self) -> Matrix {
        self.full.view((0, self.n), (self.n, self.n)).into()
    }

    pub fn lower_left(&self) -> Matrix {
        self.full.view((self.n, 0), (self.n, self.n)).into()
    }

    pub fn lower_right(&self) -> Matrix {
        self.full.view((self.n, self.n), (self.n, self.n)).into()
    }
}

pub fn psi1(p: &ModelParams, d: &DerivedQuantities, t: f64, s: f64) -> Result<Psi1Block> {
    if !(0.0 <= s && s <= t) {
        return Err(CoreError::Invalid(format!(
            "psi1 needs 0 <= s <= t, got s = {s}, t = {t}"
        )));
    }
    let n = p.n;
    let ahat = build_ahat(d, p);
    let mut generator = Matrix::zeros(2 * n, 2 * n);
    generator.view_mut((0, 0), (n, n)).copy_from(&p.a);
    generator.view_mut((n, 0), (n, n)).copy_from(&ahat.value);
    generator
        .view_mut((n, n), (n, n))
        .copy_from(&(-p.a.transpose()));
    let full = mat_exp(&generator, t - s)?;
    Ok(Psi1Block { full, n })
}

/// Number of series terms needed so that the truncation bound
/// ||Ahat|| (||A|| t)^K e^{||A|| t} / K! drops below `tol`.
fn terms_for_tolerance(a_norm: f64, ahat_norm: f64, t: f64, tol: f64) -> usize {
    let mut term = ahat_norm * (a_norm * t).exp();
    let mut k = 1usize;
    // term at K: ahat_norm (a_norm t)^K e^{a_norm t} / K!
    while k < 200 {
        term *= a_norm * t / k as f64;
        if term * (a_norm * t).exp() < tol && k >= 2 {
            return k;
        }
        k += 1;
    }
    200
}

/// S(t) = sum_{n >= 1} Lambda_n t^n / n! with the alternating recursion
/// Lambda_1 = Ahat, Lambda_n = Ahat A^{n-1} - A^T Lambda_{n-1}.
pub fn lambda_series(p: &ModelParams, d: &DerivedQuantities, t: f64, terms: usize) -> Matrix {
    let ahat = build_ahat(d, p).value;
    let n = p.n;
    let mut sum = Matrix::zeros(n, n);
    let mut lambda = ahat.clone(); // Lambda_1
    let mut a_pow = Matrix::identity(n, n); // A^{k-1}
    let mut factor = t; // t^k / k!
    for k in 1..=terms.max(1) {
        sum += &lambda * factor;
        // advance to Lambda_{k+1} = Ahat A^k - A^T Lambda_k
        a_pow = &a_pow * &p.a;
        lambda = &ahat * &a_pow - p.a.transpose() * &lambda;
        factor *= t / (k + 1) as f64;
    }
    sum
}

/// S(t) with the term count chosen from the stated truncation bound (< 1e-12).
pub fn lambda_series_adaptive(p: &ModelParams, d: &DerivedQuantities, t: f64) -> Matrix {
    let a_norm = p.a.norm();
    let ahat_norm = build_ahat(d, p).value.norm();
    let terms = terms_for_tolerance(a_norm, ahat_norm, t.max(1e-12), 1e-12);
    lambda_series(p, d, t, terms)
}

/// First Lambda terms, for reporting.
pub fn lambda_terms(p: &ModelParams, d: &DerivedQuantities, count: usize) -> Vec<Matrix> {
    let ahat = build_ahat(d, p).value;
    let mut out = Vec::with_capacity(count);
    let mut lambda = ahat.clone();
    let mut a_pow = Matrix::identity(p.n, p.n);
    for _ in 0..count {
        out.push(lambda.clone());
        a_pow = &a_pow * &p.a;
        lambda = &ahat * &a_pow - p.a.transpose() * &lambda;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolvabilityVerdict {
    Solvable,
    NotCertified,
    /// Grid refinement flipped the full-rank verdict.
    Undetermined,
}

/// Both solvability conditions with their numeric evidence.
#[derive(Debug, Clone, Serialize)]
pub struct SolvabilityReport {
    /// || S(T) IG C0 ||_F, which must vanish.
    pub condition1_residual: f64,
    /// min over grid nodes of the smallest singular value of
    /// S(T-t) IG R0^{-1} + e^{-A^T (T-t)}, which must stay away from zero.
    pub condition2_min_sv: f64,
    pub verdict: SolvabilityVerdict,
    pub tolerance: f64,
    pub note: Option<String>,
}

/// Condition-2 matrix at time-to-go tau, assembled from the Lambda-series.
fn condition2_matrix(p: &ModelParams, d: &DerivedQuantities, tau: f64) -> Result<Matrix> {
    let s_tau = lambda_series_adaptive(p, d, tau);
    let r0_inv = p
        .r0
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| CoreError::Singular("R0".into()))?;
    Ok(&s_tau * &d.ig * r0_inv + mat_exp(&(-p.a.transpose()), tau)?)
}

fn condition2_min_over(p: &ModelParams, d: &DerivedQuantities, grid: &TimeGrid) -> Result<f64> {
    let mut min_sv = f64::INFINITY;
    for t in grid.nodes() {
        let m = condition2_matrix(p, d, grid.horizon() - t)?;
        min_sv = min_sv.min(min_singular_value(&m));
    }
    Ok(min_sv)
}

pub fn check_solvability(
    p: &ModelParams,
    d: &DerivedQuantities,
    grid: &TimeGrid,
    tol: f64,
) -> Result<SolvabilityReport> {
    let horizon = grid.horizon();
    let s_horizon = lambda_series_adaptive(p, d, horizon);
    let condition1_residual = (&s_horizon * &d.ig * &p.c0).norm();

    let min_sv = condition2_min_over(p, d, grid)?;
    let min_sv_refined = condition2_min_over(p, d, &grid.refined())?;
    let cond2_ok = min_sv > tol;
    let cond2_ok_refined = min_sv_refined > tol;

    let mut note = None;
    let verdict = if cond2_ok != cond2_ok_refined {
        note = Some(format!(
            "full-rank verdict flipped under grid refinement (min sv {min_sv:.3e} vs {min_sv_refined:.3e})"
        ));
        SolvabilityVerdict::Undetermined
    } else if condition1_residual <= tol && cond2_ok {
        SolvabilityVerdict::Solvable
    } else {
        SolvabilityVerdict::NotCertified
    };

    if verdict == SolvabilityVerdict::NotCertified && condition1_residual > tol {
        let lam1 = lambda_terms(p, d, 1).pop().unwrap();
        if lam1.amax() > tol {
            // Known fixture discrepancy: diagonal commuting instances of this
            // family are sometimes quoted with an identically vanishing
            // Lambda-series, but the recursion starts from Lambda_1 = Ahat,
            // which is nonzero here, so condition 1 cannot hold as computed.
            // The computed values are reported; neither reading is silently
            // adopted.
            note = Some(format!(
                "condition 1 fails with ||S(T) IG C0|| = {condition1_residual:.6e}; \
                 Lambda_1 = Ahat has max-entry {:.6e}, so the series does not vanish \
                 even though the commuting diagonal structure is often quoted as giving \
                 Lambda_n = 0 for all n; verdict left as not-certified",
                lam1.amax()
            ));
        }
    }

    Ok(SolvabilityReport {
        condition1_residual,
        condition2_min_sv: min_sv,
        verdict,
        tolerance: tol,
        note,
    })
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::reference_instance;
    use crate::model::derive_offsets;
    use nalgebra::dmatrix;

    #[test]
    fn ahat_reference_value() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let ahat = build_ahat(&d, &p);
        assert!((ahat.value - dmatrix![0.0, 0.0; 0.0, -0.1]).amax() < 1e-14);
    }

    #[test]
    fn ahat_vanishes_when_weights_cancel() {
        let mut p = reference_instance();
        p.gamma = Matrix::identity(2, 2); // Xi1 = Q
        let d = derive_offsets(&p).unwrap();
        assert!(build_ahat(&d, &p).value.amax() < 1e-14);
    }

    #[test]
    fn ahat_with_zero_g_reduces() {
        let p = reference_instance(); // G = 0
        let d = derive_offsets(&p).unwrap();
        let ahat = build_ahat(&d, &p);
        assert!((ahat.value - (&d.xi1 - &p.q)).amax() < 1e-14);
    }

    #[test]
    fn psi1_at_equal_times_is_identity() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let block = psi1(&p, &d, 0.7, 0.7).unwrap();
        assert!((block.full - Matrix::identity(4, 4)).amax() < 1e-14);
    }

    #[test]
    fn psi1_block_structure() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let block = psi1(&p, &d, 1.0, 0.3).unwrap();
        assert!(block.upper_right().amax() == 0.0 || block.upper_right().amax() < 1e-13);
        let tau = 0.7;
        let ul = block.upper_left();
        let lr = block.lower_right();
        assert!((ul - mat_exp(&p.a, tau).unwrap()).amax() < 1e-12);
        assert!((lr - mat_exp(&(-p.a.transpose()), tau).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn psi1_block_diagonal_when_ahat_zero() {
        let mut p = reference_instance();
        p.gamma = Matrix::identity(2, 2);
        let d = derive_offsets(&p).unwrap();
        let block = psi1(&p, &d, 0.9, 0.0).unwrap();
        assert!(block.lower_left().amax() < 1e-12);
    }

    #[test]
    fn psi1_flow_property() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let a = psi1(&p, &d, 1.5, 0.6).unwrap().full;
        let b = psi1(&p, &d, 0.6, 0.2).unwrap().full;
        let c = psi1(&p, &d, 1.5, 0.2).unwrap().full;
        assert!((a * b - c).amax() < 1e-9);
    }

    #[test]
    fn lambda_first_term_is_ahat() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let terms = lambda_terms(&p, &d, 3);
        assert!((&terms[0] - &build_ahat(&d, &p).value).amax() < 1e-15);
    }

    #[test]
    fn lambda_even_terms_vanish_for_commuting_symmetric() {
        // A symmetric and commuting with Ahat: Lambda_2 = Ahat A - A^T Ahat = 0.
        let p = reference_instance(); // A, Ahat both diagonal
        let d = derive_offsets(&p).unwrap();
        let terms = lambda_terms(&p, &d, 4);
        assert!(terms[1].amax() < 1e-14);
        assert!(terms[3].amax() < 1e-14);
    }

    #[test]
    fn reference_series_closed_form() {
        // Diagonal instance: S(t) = diag(0, -0.1 t).
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let t = p.horizon;
        let s = lambda_series_adaptive(&p, &d, t);
        assert!((s - dmatrix![0.0, 0.0; 0.0, -0.1 * t]).amax() < 1e-12);
    }

    #[test]
    fn series_matches_psi1_lower_left() {
        // Two independent computations of the same block, on a dense instance.
        let mut p = reference_instance();
        p.a = dmatrix![0.6, -0.4; 0.2, 0.1];
        p.gamma = dmatrix![0.5, 0.1; -0.2, 0.7];
        p.g = dmatrix![0.4, 0.1; 0.1, 0.6];
        p.gamma0 = dmatrix![0.2, 0.0; 0.1, 0.3];
        let d = derive_offsets(&p).unwrap();
        for tau in [0.3, 1.0, 2.0] {
            let block = psi1(&p, &d, tau, 0.0).unwrap();
            let series = lambda_series_adaptive(&p, &d, tau);
            assert!(
                (block.lower_left() - series).amax() < 1e-10,
                "tau = {tau}"
            );
        }
    }

    #[test]
    fn condition2_identity_holds() {
        // (0, I) Psi1(T, t) (IG R0^{-1}; I) = S(T-t) IG R0^{-1} + e^{-A^T (T-t)}.
        let mut p = reference_instance();
        p.a = dmatrix![0.6, -0.4; 0.2, 0.1];
        p.g = dmatrix![0.4, 0.1; 0.1, 0.6];
        let d = derive_offsets(&p).unwrap();
        let horizon = 1.3;
        for t in [0.0, 0.5, 1.0] {
            let tau = horizon - t;
            let block = psi1(&p, &d, horizon, t).unwrap();
            let r0_inv = p.r0.clone().lu().try_inverse().unwrap();
            let stacked_top = &d.ig * &r0_inv;
            let via_psi = block.lower_left() * &stacked_top + block.lower_right();
            let direct = condition2_matrix(&p, &d, tau).unwrap();
            assert!((via_psi - direct).amax() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn solvable_when_ahat_zero() {
        let mut p = reference_instance();
        p.gamma = Matrix::identity(2, 2);
        let d = derive_offsets(&p).unwrap();
        let grid = TimeGrid::new(p.horizon, 64).unwrap();
        let report = check_solvability(&p, &d, &grid, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(report.verdict, SolvabilityVerdict::Solvable);
        assert!(report.condition1_residual < 1e-14);
        assert!(report.condition2_min_sv > 0.0);
    }

    #[test]
    fn reference_not_certified_with_note() {
        let p = reference_instance();
        let d = derive_offsets(&p).unwrap();
        let grid = TimeGrid::new(p.horizon, 64).unwrap();
        let report = check_solvability(&p, &d, &grid, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(report.verdict, SolvabilityVerdict::NotCertified);
        // S(T) IG C0 = diag(0, -0.1 T) C0 has a single entry -0.2 T.
        assert!((report.condition1_residual - 0.2 * p.horizon).abs() < 1e-12);
        let note = report.note.expect("discrepancy note must be attached");
        assert!(note.contains("Lambda_1"));
    }
}
