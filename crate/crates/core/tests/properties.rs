//! Randomized structural properties.

use proptest::prelude::*;

use subshrink_core::linalg::SymMatrix;
use subshrink_core::mcmc::constrain_to_zero_sum;
use subshrink_core::model::{rmse_curve, summarize_kappa};
use subshrink_core::prior::kappa;
use subshrink_core::spline::{equispaced, make_basis};
use subshrink_core::subspace::{Subspace, SubspaceSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_rows_sum_to_one(inner in 2usize..30, lo in -10.0f64..0.0, width in 0.5f64..20.0, t in 0.0f64..=1.0) {
        let b = make_basis(lo, lo + width, inner).unwrap();
        let x = lo + t * width;
        let z = b.eval_design(&[x]).unwrap();
        let s: f64 = z.row(0).iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(z.row(0).iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn kappa_is_a_weight(l in 0.0f64..1e6) {
        let k = kappa(l);
        prop_assert!((0.0..=1.0).contains(&k));
    }

    #[test]
    fn kappa_summary_is_bounded(ls in prop::collection::vec(0.0f64..100.0, 1..50)) {
        let k = summarize_kappa(&ls).unwrap();
        let lo = ls.iter().map(|&l| kappa(l)).fold(f64::INFINITY, f64::min);
        let hi = ls.iter().map(|&l| kappa(l)).fold(0.0, f64::max);
        prop_assert!(k >= lo - 1e-15 && k <= hi + 1e-15);
    }

    #[test]
    fn p0_leaves_the_null_space_fixed(n in 10usize..60, deg in 0u32..3, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x = equispaced(-1.0, 1.0, n);
        let p = Subspace::new(&SubspaceSpec::polynomial(deg), &x).unwrap().projections();
        let v: Vec<f64> = x.iter().map(|t| a + if deg >= 1 { b * t } else { 0.0 }).collect();
        let pv = p.apply_p0(&v);
        for (u, w) in v.iter().zip(&pv) {
            prop_assert!((u - w).abs() < 1e-10);
        }
        prop_assert!(p.apply_p1(&v).iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn zero_sum_correction(v in prop::collection::vec(-100.0f64..100.0, 2..12), d in 0.1f64..10.0) {
        let q = SymMatrix::from_diag(&vec![d; v.len()]);
        let c = constrain_to_zero_sum(&v, &q).unwrap();
        prop_assert!(c.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn rmse_is_symmetric_and_zero_on_equal(f in prop::collection::vec(-5.0f64..5.0, 5..40), shift in -3.0f64..3.0) {
        let grid = equispaced(0.0, 1.0, f.len());
        let g: Vec<f64> = f.iter().map(|v| v + shift).collect();
        prop_assert!(rmse_curve(&grid, &f, &f).unwrap() == 0.0);
        let a = rmse_curve(&grid, &f, &g).unwrap();
        prop_assert!((a - rmse_curve(&grid, &g, &f).unwrap()).abs() < 1e-14);
        prop_assert!((a - shift.abs()).abs() < 1e-10);
    }
}
