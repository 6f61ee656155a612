mod common;

use std::f64::consts::PI;

use fockspec::grid::{norm, torus_volume};
use fockspec::model::{check_orthogonality, harmonic_samples, mu_thresholds};
use fockspec::{example_family, Error, ExampleParams, FriedrichsFamily, GridMode, PSweep, Regime, SymPairIndex, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn base_grid_without_offset() {
    let g = TorusGrid::new(2, GridMode::Base, false).unwrap();
    assert_eq!(g.len(), 8);
    assert!(close(g.weight() * g.len() as f64, torus_volume(), 1e-15));
}

#[test]
fn offset_grid_avoids_origin() {
    let g = TorusGrid::new(2, GridMode::Base, true).unwrap();
    assert!(!g.has_node_at(&[0.0; 3]));
    let closest = g.nodes().iter().map(norm).fold(f64::INFINITY, f64::min);
    assert!(close(closest, 0.5 * PI * 3f64.sqrt(), 1e-14));
}

#[test]
fn double_cover_is_closed_under_shift() {
    for (n, offset) in [(4, false), (4, true), (6, true)] {
        let g = TorusGrid::new(n, GridMode::DoubleCover, offset).unwrap();
        let c = g.shift_involution_check().unwrap();
        assert!(c.exact, "n={n}: mismatch {}", c.max_mismatch);
        for (i, &j) in c.permutation.iter().enumerate() {
            assert_ne!(i, j);
            assert_eq!(c.permutation[j], i);
        }
    }
    let base = TorusGrid::new(4, GridMode::Base, true).unwrap();
    assert!(matches!(base.shift_involution_check(), Err(Error::UnsupportedMode(_))));
}

#[test]
fn constant_and_harmonic_integrals() {
    for mode in [GridMode::Base, GridMode::DoubleCover] {
        let g = TorusGrid::new(6, mode, true).unwrap();
        assert!(close(g.integrate_fn(|_| 1.0).unwrap(), torus_volume(), 1e-14));
        assert!(g.integrate_fn(|s| s[0].cos()).unwrap().abs() < 1e-12);
    }
}

#[test]
fn lattice_green_function_against_sampling() {
    let g = TorusGrid::new(16, GridMode::Base, true).unwrap();
    let q = fockspec::Quadrature::richardson(g).unwrap();
    let est = q.integrate_fn(|s| 1.0 / fockspec::model::eps(s)).unwrap();
    let (mc, err) = common::mc_integral(&|_| 1.0, 0.0, 30, 8, 11);
    assert!((est.value - mc).abs() < 4.0 * err + 1e-3 * mc, "{} vs {mc} ± {err}", est.value);
    assert!(close(est.value / torus_volume(), common::WATSON, 2e-4));
}

#[test]
fn embedding_of_constant_table() {
    let g = TorusGrid::new(2, GridMode::Base, true).unwrap();
    let idx = SymPairIndex::new(g.len());
    assert_eq!(idx.len(), 36);
    let v = idx.embed(g.weight(), &vec![1.0; 64]).unwrap();
    let n2: f64 = v.iter().map(|x| x * x).sum();
    assert!(close(n2, torus_volume().powi(2), 1e-13));
}

#[test]
fn embedding_of_single_diagonal_pair() {
    let idx = SymPairIndex::new(8);
    let mut t = vec![0.0; 64];
    t[3 * 8 + 3] = 2.5;
    let v = idx.embed(1.0, &t).unwrap();
    let n2: f64 = v.iter().map(|x| x * x).sum();
    assert!(close(n2, 6.25, 1e-15));
}

#[test]
fn embedding_round_trip() {
    let g = TorusGrid::new(4, GridMode::Base, true).unwrap();
    let n = g.len();
    let idx = SymPairIndex::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            t[i * n + j] = x;
            t[j * n + i] = x;
        }
    }
    let v = idx.embed(g.weight(), &t).unwrap();
    let back = idx.project(g.weight(), &v).unwrap();
    let err = t.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-13);
    let direct: f64 = t.iter().map(|x| x * x).sum::<f64>() * g.weight() * g.weight();
    let n2: f64 = v.iter().map(|x| x * x).sum();
    assert!(close(n2, direct, 1e-13));
}

#[test]
fn asymmetric_table_is_rejected() {
    let idx = SymPairIndex::new(2);
    assert!(idx.embed(1.0, &[1.0, 2.0, 0.0, 1.0]).is_err());
}

#[test]
fn thresholds_are_ordered() {
    let g = TorusGrid::new(8, GridMode::Base, true).unwrap();
    for (c, d) in [([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]), ([0.3, 1.0, 2.0], [2.0, 0.0, 0.5])] {
        let p = ExampleParams {
            c,
            d,
            ..ExampleParams::default()
        };
        for alpha in 1..=2 {
            let t = mu_thresholds(&p, alpha, &g).unwrap();
            assert!(t.mu0 < t.mu1, "{t:?}");
        }
    }
}

#[test]
fn regimes_across_threshold_multiples() {
    let th = common::thresholds(GridMode::Base);
    let grid = TorusGrid::new(16, GridMode::Base, true).unwrap();
    let sweep = PSweep::new(9).unwrap();
    let params = |f: f64| ExampleParams {
        mu1: f * th[0].mu0,
        mu2: f * th[1].mu0,
        ..ExampleParams::default()
    };
    let classify = |p: &ExampleParams| {
        let fam = FriedrichsFamily::refined(&example_family(p).unwrap(), &grid).unwrap();
        [fam.classify_regime(1, &sweep).unwrap(), fam.classify_regime(2, &sweep).unwrap()]
    };

    let pos = classify(&params(0.5));
    for r in &pos {
        assert_eq!(r.regime, Regime::Pos);
        assert!(norm(&r.argmin) < 1e-12);
        assert!(close(r.min_value, 0.5, 1e-5), "{}", r.min_value);
    }
    for r in classify(&params(1.5)) {
        assert_eq!(r.regime, Regime::Mixed);
        assert!(r.min_value < 0.0 && r.max_value >= 0.0);
    }
    let neg = ExampleParams {
        mu1: 2.0 * th[0].mu1,
        mu2: 2.0 * th[1].mu1,
        ..ExampleParams::default()
    };
    for r in classify(&neg) {
        assert_eq!(r.regime, Regime::Neg);
        assert!(close(r.max_value, -1.0, 1e-5), "{}", r.max_value);
        assert!(r.argmax.iter().all(|x| (x.abs() - PI).abs() < 1e-12));
    }
}

#[test]
fn orthogonality_depends_on_the_torus() {
    let model = example_family(&ExampleParams::default()).unwrap();
    let dc = TorusGrid::new(6, GridMode::DoubleCover, true).unwrap();
    let tests: Vec<Vec<f64>> = [[0, 0, 0], [1, 0, 0], [1, 2, 0], [2, 1, 1]]
        .iter()
        .map(|k| harmonic_samples(&dc, *k))
        .collect();
    let r = check_orthogonality(&model, &dc, &tests).unwrap();
    assert!(r.max_abs < 1e-13 * torus_volume(), "{}", r.max_abs);

    let base = TorusGrid::new(6, GridMode::Base, true).unwrap();
    let r = check_orthogonality(&model, &base, &[harmonic_samples(&base, [1, 0, 0])]).unwrap();
    assert!(r.max_abs > 1e-3);
}
