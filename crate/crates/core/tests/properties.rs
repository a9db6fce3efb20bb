//! Property-based invariants over randomized inputs.

use mflqg::fixtures::scalar_instance;
use mflqg::model::derive_offsets;
use mflqg::numerics::{mat_exp, min_eig, Matrix};
use mflqg::oracle::{tree_evaluate, tree_minmax, AffineMap, TreePolicy, TreeSpec};
use nalgebra::dvector;
use proptest::prelude::*;

fn small_matrix(n: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-1.0_f64..1.0, n * n)
        .prop_map(move |v| Matrix::from_row_slice(n, n, &v))
}

fn symmetric_matrix(n: usize) -> impl Strategy<Value = Matrix> {
    small_matrix(n).prop_map(|m| (&m + m.transpose()) * 0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mat_exp_semigroup(m in small_matrix(3), s in 0.0_f64..1.0, t in 0.0_f64..1.0) {
        let whole = mat_exp(&m, s + t).unwrap();
        let split = mat_exp(&m, s).unwrap() * mat_exp(&m, t).unwrap();
        prop_assert!((whole - split).amax() < 1e-10);
    }

    #[test]
    fn min_eig_shift_invariance(m in symmetric_matrix(4), c in -2.0_f64..2.0) {
        let base = min_eig(&m).unwrap();
        let shifted = min_eig(&(&m + Matrix::identity(4, 4) * c)).unwrap();
        prop_assert!((shifted - (base + c)).abs() < 1e-9);
    }

    #[test]
    fn offset_quantities_scale_linearly(c in 0.1_f64..10.0) {
        let mut p = scalar_instance();
        p.g = nalgebra::dmatrix![0.4];
        let d1 = derive_offsets(&p).unwrap();
        let mut scaled = p.clone();
        scaled.q *= c;
        scaled.g *= c;
        scaled.r0 *= c;
        let d2 = derive_offsets(&scaled).unwrap();
        prop_assert!((&d2.xi1 - &d1.xi1 * c).amax() < 1e-12 * c.max(1.0));
        prop_assert!((&d2.xi1_g - &d1.xi1_g * c).amax() < 1e-12 * c.max(1.0));
        prop_assert!((&d2.ig - &d1.ig).amax() < 1e-11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn saddle_inequality_under_deviations(
        du in -0.5_f64..0.5,
        ds in -0.4_f64..0.4,
    ) {
        let p = scalar_instance();
        let d = derive_offsets(&p).unwrap();
        let spec = TreeSpec::new(2, 2, p.horizon).unwrap();
        let saddle = tree_minmax(&p, &d, &spec).unwrap();
        let dev_u = TreePolicy::PerLayer(vec![
            AffineMap::constant(dvector![du, -du], 2);
            spec.steps
        ]);
        let dev_s = TreePolicy::PerLayer(vec![
            AffineMap::constant(dvector![ds], 2);
            spec.steps
        ]);
        let lhs = tree_evaluate(&p, &d, &spec, &saddle.control, &dev_s).unwrap();
        let rhs = tree_evaluate(&p, &d, &spec, &dev_u, &saddle.adversary).unwrap();
        prop_assert!(lhs <= saddle.value + 1e-10);
        prop_assert!(saddle.value <= rhs + 1e-10);
    }
}
