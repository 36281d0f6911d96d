//! Property-based invariants of the numerics and realization layers.

use proptest::prelude::*;
use qmemtime_core::numerics::{
    expm, integrate_lyapunov, kernel_basis, lstsq_min_norm, numerical_rank, HermitianPair,
    DEFAULT_RANK_TOL,
};
use qmemtime_core::oqho::{ito_j, realize, CcrStructure, OqhoParams};
use qmemtime_core::{RealMatrix, RealVector};

fn mat(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = RealMatrix> {
    proptest::collection::vec(-scale..scale, rows * cols)
        .prop_map(move |v| RealMatrix::from_vec(rows, cols, v))
}

fn min_eig(sym: &RealMatrix) -> f64 {
    ((sym + sym.transpose()) * 0.5)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponential_satisfies_semigroup_property(
        a in mat(4, 4, 1.0),
        s in 0.0..2.0f64,
        t in 0.0..2.0f64,
    ) {
        let joint = expm(&a, s + t).unwrap();
        let split = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        prop_assert!(
            (&joint - split).norm() <= 1e-9 * (1.0 + joint.norm()),
            "semigroup deviation at s = {s}, t = {t}"
        );
    }

    #[test]
    fn realization_factorizations_hold(
        raw in mat(4, 4, 1.0),
        coupling in mat(2, 4, 1.0),
    ) {
        let energy = (&raw + raw.transpose()) * 0.5;
        let params = OqhoParams::new(energy, coupling.clone(), None).unwrap();
        let ccr = CcrStructure::new(2, 2).unwrap();
        let ss = realize(&params, &ccr).unwrap();

        // The drift splits exactly into its closed and field parts.
        prop_assert!((ss.a() - (ss.a0() + ss.atilde())).norm() <= 1e-14 * (1.0 + ss.a().norm()));
        // Dual factorization of the field part.
        let alt = ss.b() * ccr.j_field() * &coupling;
        prop_assert!((ss.atilde() - &alt).norm() <= 1e-12 * (1.0 + alt.norm()));
        // Output matrix against its definition.
        let c_direct = params.selector() * ccr.j_field() * &coupling * 2.0;
        prop_assert!((ss.c() - &c_direct).norm() <= 1e-13 * (1.0 + c_direct.norm()));
        // Diffusion: real part PSD, imaginary part from the field structure.
        prop_assert!(min_eig(ss.mho().re()) >= -1e-10);
        let im_direct = ss.b() * ccr.j_field() * ss.b().transpose();
        prop_assert!((ss.mho().im() - &im_direct).norm() <= 1e-12 * (1.0 + im_direct.norm()));
    }

    #[test]
    fn covariance_integration_preserves_structure(
        a in mat(4, 4, 0.8),
        b in mat(4, 2, 1.0),
    ) {
        let j = ito_j(2).unwrap();
        let mho = HermitianPair::project(&b * b.transpose(), &b * j * b.transpose());
        let grid = [0.0, 0.3, 0.9, 2.0];
        let covs = integrate_lyapunov(&a, &mho, &grid).unwrap();
        prop_assert_eq!(covs.len(), grid.len());
        for v in &covs {
            prop_assert!((v.re() - v.re().transpose()).norm() <= 1e-12 * (1.0 + v.re().norm()));
            prop_assert!((v.im() + v.im().transpose()).norm() <= 1e-12 * (1.0 + v.im().norm()));
            prop_assert!(min_eig(v.re()) >= -1e-8 * (1.0 + v.re().norm()));
        }
        // Monotone in t with respect to the PSD order.
        for w in covs.windows(2) {
            let diff = w[1].re() - w[0].re();
            prop_assert!(min_eig(&diff) >= -1e-8 * (1.0 + diff.norm()));
        }
    }

    #[test]
    fn kernel_columns_are_orthonormal_annihilators(m in mat(2, 5, 1.0)) {
        let k = kernel_basis(&m, DEFAULT_RANK_TOL);
        let rank = numerical_rank(&m, DEFAULT_RANK_TOL);
        prop_assert_eq!(k.ncols(), 5 - rank);
        let gram = k.transpose() * &k;
        prop_assert!((gram - RealMatrix::identity(k.ncols(), k.ncols())).norm() <= 1e-10);
        prop_assert!((&m * &k).norm() <= 1e-10 * (1.0 + m.norm()));
    }

    #[test]
    fn least_squares_satisfies_normal_equations(
        l in mat(4, 3, 1.0),
        rhs in proptest::collection::vec(-1.0..1.0f64, 4),
    ) {
        let b = RealVector::from_vec(rhs);
        let (x, residual) = lstsq_min_norm(&l, &b, DEFAULT_RANK_TOL).unwrap();
        let gradient = l.transpose() * (&l * &x - &b);
        prop_assert!(gradient.norm() <= 1e-8 * (1.0 + l.norm() * b.norm()));
        prop_assert!(residual >= -1e-15);
    }
}
