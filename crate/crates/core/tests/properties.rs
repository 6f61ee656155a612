use std::f64::consts::PI;

use fockspec::grid::torus_volume;
use fockspec::spectrum::{assemble_operator, OperatorKind, DEFAULT_PAIR_CAP};
use fockspec::weinberg::assemble_w;
use fockspec::{example_family, ExampleParams, FriedrichsFamily, GridMode, SymPairIndex, TorusGrid};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ExampleParams> {
    (
        1e-4..0.05f64,
        1e-4..0.05f64,
        prop::array::uniform3(-2.0..2.0f64),
        prop::array::uniform3(-2.0..2.0f64),
        -2.0..3.0f64,
        0.0..0.5f64,
    )
        .prop_map(|(mu1, mu2, c, d, w0, v0_amplitude)| ExampleParams {
            mu1,
            mu2,
            c,
            d,
            w0,
            v0_amplitude,
        })
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-PI..PI)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resolved_harmonics_integrate_exactly(k in prop::array::uniform3(-3i32..=3), offset: bool) {
        let g = TorusGrid::new(8, GridMode::Base, offset).unwrap();
        let v = g.integrate_fn(|s| (k[0] as f64 * s[0] + k[1] as f64 * s[1] + k[2] as f64 * s[2]).cos()).unwrap();
        let exact = if k == [0, 0, 0] { torus_volume() } else { 0.0 };
        prop_assert!((v - exact).abs() <= 1e-13 * torus_volume());
    }

    #[test]
    fn double_cover_keeps_periodic_integrals(
        coef in prop::collection::vec(-1.0..1.0f64, 4),
        k in prop::array::uniform3(0i32..=2),
    ) {
        let f = |s: &[f64; 3]| {
            coef[0] + coef[1] * (k[0] as f64 * s[0]).cos()
                + coef[2] * (k[1] as f64 * s[1] + k[2] as f64 * s[2]).sin()
                + coef[3] * (s[0] - s[2]).cos().powi(2)
        };
        let base = TorusGrid::new(6, GridMode::Base, true).unwrap().integrate_fn(f).unwrap();
        let dc = TorusGrid::new(6, GridMode::DoubleCover, true).unwrap().integrate_fn(f).unwrap();
        prop_assert!((base - dc).abs() <= 1e-13 * torus_volume());
    }

    #[test]
    fn pair_embedding_is_isometric(vals in prop::collection::vec(-5.0..5.0f64, 36), w in 0.1..3.0f64) {
        let n = 8;
        let idx = SymPairIndex::new(n);
        let mut t = vec![0.0; n * n];
        for (k, (i, j)) in idx.pairs().enumerate() {
            t[i * n + j] = vals[k];
            t[j * n + i] = vals[k];
        }
        let v = idx.embed(w, &t).unwrap();
        let direct: f64 = w * w * t.iter().map(|x| x * x).sum::<f64>();
        let embedded: f64 = v.iter().map(|x| x * x).sum();
        prop_assert!((direct - embedded).abs() <= 1e-13 * direct.max(1.0));
        let back = idx.project(w, &v).unwrap();
        prop_assert!(back.iter().zip(&t).all(|(a, b)| (a - b).abs() <= 1e-13 * b.abs().max(1.0)));
    }

    #[test]
    fn assembled_operator_is_symmetric(p in params(), dc: bool) {
        let model = example_family(&p).unwrap();
        let mode = if dc { GridMode::DoubleCover } else { GridMode::Base };
        let grid = TorusGrid::new(2, mode, true).unwrap();
        let op = assemble_operator(OperatorKind::H, &model, &grid, None, DEFAULT_PAIR_CAP).unwrap();
        prop_assert!(op.symmetry_defect(4, 1) <= 1e-12);
    }

    #[test]
    fn determinants_decrease_below_the_band(p in params(), q in point(), a in 0.01..5.0f64, b in 0.01..5.0f64) {
        let model = example_family(&p).unwrap();
        let fam = FriedrichsFamily::plain(&model, &TorusGrid::new(4, GridMode::Base, true).unwrap()).unwrap();
        let (m_p, _) = fam.fibre_bounds(&q);
        let (z_hi, z_lo) = (m_p - a.min(b), m_p - a.max(b) - 0.01);
        for alpha in 1..=2 {
            let hi = fam.delta_value(alpha, &q, z_hi).unwrap();
            let lo = fam.delta_value(alpha, &q, z_lo).unwrap();
            prop_assert!(lo >= hi, "alpha {alpha}: {lo} < {hi}");
        }
    }

    #[test]
    fn determinant_derivative_matches_difference_quotient(p in params(), q in point(), a in 0.1..5.0f64) {
        let model = example_family(&p).unwrap();
        let fam = FriedrichsFamily::plain(&model, &TorusGrid::new(4, GridMode::Base, true).unwrap()).unwrap();
        let (m_p, _) = fam.fibre_bounds(&q);
        let z = m_p - a;
        let h = 1e-5;
        for alpha in 1..=2 {
            let d = fam.delta_dz(alpha, &q, z).unwrap();
            let fd = (fam.delta_value(alpha, &q, z + h).unwrap() - fam.delta_value(alpha, &q, z - h).unwrap()) / (2.0 * h);
            prop_assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "alpha {alpha}: {d} vs {fd}");
        }
    }

    #[test]
    fn weinberg_vacuum_pair_block_vanishes(p in params(), z in 1.0..20.0f64) {
        let model = example_family(&p).unwrap();
        let fam = FriedrichsFamily::plain(&model, &TorusGrid::new(2, GridMode::Base, true).unwrap()).unwrap();
        if let Ok(w) = assemble_w(&fam, -z) {
            let b = w.block(0, 2);
            prop_assert!((0..b.ncols()).all(|j| b[(0, j)] == 0.0));
            prop_assert_eq!(w.dim(), 1 + 8 + 36);
        }
    }
}
