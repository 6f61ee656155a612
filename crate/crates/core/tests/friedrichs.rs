mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{model_at, thresholds, Level};
use fockspec::friedrichs::RootSource;
use fockspec::model::eps;
use fockspec::{example_family, Error, ExampleParams, FriedrichsFamily, GridMode, ModelFunctions, PSweep, Regime, TorusGrid};

const ORIGIN: [f64; 3] = [0.0; 3];
const CORNER: [f64; 3] = [PI; 3];

fn uncoupled(w1: f64) -> ModelFunctions {
    let zero: Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync> = Arc::new(|_| 0.0);
    ModelFunctions::separable(
        1.0,
        Arc::new(move |p| w1 + 0.1 * p[0].cos()),
        zero.clone(),
        zero.clone(),
        zero,
        Arc::new(eps),
        ORIGIN,
    )
}

fn grid(n: usize, mode: GridMode) -> TorusGrid {
    TorusGrid::new(n, mode, true).unwrap()
}

#[test]
fn uncoupled_determinants() {
    let fam = FriedrichsFamily::plain(&uncoupled(-1.0), &grid(4, GridMode::Base)).unwrap();
    let p = [0.3, -1.0, 2.0];
    for z in [-3.0, -0.5, 15.0] {
        let (d1, d2) = fam.deltas(&p, z).unwrap();
        assert!((d1 - (-1.0 + 0.1 * p[0].cos() - z)).abs() < 1e-14);
        assert_eq!(d2, 1.0);
    }
    let scan = fam.roots_full_scan(&p).unwrap();
    assert_eq!(scan.count, 1);
    let root = scan.below[0].unwrap();
    assert!((root - (-1.0 + 0.1 * p[0].cos())).abs() < 1e-10);
    assert!(scan.below[1].is_none());
    assert!(fam.eigenvalue_below(2, &p).unwrap().root.is_none());
}

#[test]
fn uncoupled_level_inside_the_band_is_not_a_root() {
    let fam = FriedrichsFamily::plain(&uncoupled(4.0), &grid(4, GridMode::Base)).unwrap();
    let scan = fam.roots_full_scan(&[1.0, 1.0, 1.0]).unwrap();
    assert_eq!(scan.count, 0);
}

#[test]
fn determinant_tends_to_one_far_below() {
    let th = thresholds(GridMode::Base);
    let fam = FriedrichsFamily::plain(&model_at(&th, Level::Mixed, Level::Mixed), &grid(6, GridMode::Base)).unwrap();
    let d2 = fam.delta_value(2, &[0.4, 0.1, -0.7], -1e6).unwrap();
    assert!((d2 - 1.0).abs() < 1e-5);
}

#[test]
fn determinant_at_origin_matches_threshold() {
    let th = thresholds(GridMode::Base);
    let g = grid(16, GridMode::Base);
    for mu in [0.3, 0.8, 1.7] {
        let p = ExampleParams {
            mu2: mu * th[1].mu0,
            ..ExampleParams::default()
        };
        let fam = FriedrichsFamily::refined(&example_family(&p).unwrap(), &g).unwrap();
        let d2 = fam.delta_value(2, &ORIGIN, 0.0).unwrap();
        assert!((d2 - (1.0 - mu)).abs() < 1e-6, "{d2}");
    }
}

#[test]
fn bound_state_below_threshold_at_origin() {
    let th = thresholds(GridMode::Base);
    let g = grid(8, GridMode::Base);
    let weak = ExampleParams {
        mu2: 0.5 * th[1].mu0,
        ..ExampleParams::default()
    };
    let fam = FriedrichsFamily::refined(&example_family(&weak).unwrap(), &g).unwrap();
    assert!(fam.eigenvalue_below(2, &ORIGIN).unwrap().root.is_none());

    let strong = ExampleParams {
        mu2: 2.0 * th[1].mu0,
        ..ExampleParams::default()
    };
    let fam = FriedrichsFamily::refined(&example_family(&strong).unwrap(), &g).unwrap();
    let below = fam.eigenvalue_below(2, &ORIGIN).unwrap();
    let z = below.root.expect("root below the threshold");
    assert!(z < 0.0);
    assert!(fam.delta_value(2, &ORIGIN, z).unwrap().abs() < 1e-9);
}

#[test]
fn strong_coupling_binds_everywhere() {
    let th = thresholds(GridMode::Base);
    let p = ExampleParams {
        mu2: 10.0 * th[1].mu1,
        ..ExampleParams::default()
    };
    let fam = FriedrichsFamily::refined(&example_family(&p).unwrap(), &grid(8, GridMode::Base)).unwrap();
    for q in &PSweep::new(5).unwrap().points {
        assert!(fam.roots_full_scan(q).unwrap().below[1].is_some(), "{q:?}");
    }
}

#[test]
fn fibre_spectrum_on_double_cover() {
    let th = thresholds(GridMode::DoubleCover);
    let fam = FriedrichsFamily::plain(&model_at(&th, Level::Neg, Level::Neg), &grid(6, GridMode::DoubleCover)).unwrap();
    let p = [0.2, -0.4, 0.9];
    let spec = fam.h_spectrum_discrete(&p).unwrap();
    let scan = fam.roots_full_scan(&p).unwrap();
    let a: Vec<f64> = spec.eigenvalues.iter().map(|r| r.z).collect();
    let b: Vec<f64> = scan.roots().iter().map(|r| r.z).collect();
    assert_eq!(a, b);
    assert!(spec.max_cross_term <= 1e-12 * fam.scale());
}

#[test]
fn fibre_spectrum_refuses_base_mode_cross_term() {
    let th = thresholds(GridMode::Base);
    let fam = FriedrichsFamily::plain(&model_at(&th, Level::Neg, Level::Neg), &grid(6, GridMode::Base)).unwrap();
    let err = fam.h_spectrum_discrete(&[0.2, -0.4, 0.9]).unwrap_err();
    assert!(matches!(err, Error::DecouplingViolated { .. }));
}

#[test]
fn eigenvector_of_second_channel() {
    let th = thresholds(GridMode::Base);
    let p = ExampleParams {
        c: [0.0; 3],
        mu2: 2.0 * th[1].mu1,
        ..ExampleParams::default()
    };
    let fam = FriedrichsFamily::plain(&example_family(&p).unwrap(), &grid(6, GridMode::Base)).unwrap();
    let q = [0.5, 0.5, -0.5];
    let z = fam.roots_full_scan(&q).unwrap().below[1].unwrap();
    let pair = fam.reconstruct_h_eigenvector(&q, z).unwrap();
    assert_eq!(pair.source, RootSource::Delta2Root);
    assert_eq!(pair.f0, 0.0);
    assert!(pair.residual < 1e-9);
}

#[test]
fn eigenvector_of_first_channel() {
    let th = thresholds(GridMode::Base);
    let p = ExampleParams {
        mu1: 2.0 * th[0].mu1,
        d: [0.0; 3],
        ..ExampleParams::default()
    };
    let fam = FriedrichsFamily::plain(&example_family(&p).unwrap(), &grid(6, GridMode::Base)).unwrap();
    let q = [0.5, 0.5, -0.5];
    let z = fam.roots_full_scan(&q).unwrap().below[0].unwrap();
    let pair = fam.reconstruct_h_eigenvector(&q, z).unwrap();
    assert_eq!(pair.source, RootSource::Delta1Root);
    assert!(pair.f0.abs() > 0.0);
    assert!(pair.residual < 1e-9);
}

#[test]
fn eigenvector_at_origin() {
    let th = thresholds(GridMode::DoubleCover);
    let fam = FriedrichsFamily::plain(&model_at(&th, Level::Mixed, Level::Neg), &grid(6, GridMode::DoubleCover)).unwrap();
    let spec = fam.h_spectrum_discrete(&ORIGIN).unwrap();
    assert!(!spec.eigenvalues.is_empty());
    for r in &spec.eigenvalues {
        let pair = fam.reconstruct_h_eigenvector(&ORIGIN, r.z).unwrap();
        assert!(pair.residual < 1e-9, "z = {}: {}", r.z, pair.residual);
    }
}

#[test]
fn non_eigenvalue_is_rejected() {
    let th = thresholds(GridMode::DoubleCover);
    let fam = FriedrichsFamily::plain(&model_at(&th, Level::Neg, Level::Neg), &grid(4, GridMode::DoubleCover)).unwrap();
    assert!(matches!(
        fam.reconstruct_h_eigenvector(&ORIGIN, -50.0),
        Err(Error::NotAnEigenvalue(_))
    ));
}

#[test]
fn branches_by_regime() {
    let th = thresholds(GridMode::Base);
    let g = grid(8, GridMode::Base);
    let sweep = PSweep::new(9).unwrap();
    let near = |a: &[f64; 3], b: &[f64; 3]| fockspec::grid::torus_distance(a, b) < 1e-3;

    let fam = FriedrichsFamily::refined(&model_at(&th, Level::Pos, Level::Pos), &g).unwrap();
    let b = fam.two_particle_branch(1, &sweep, Regime::Pos).unwrap();
    assert!(b.e_min.is_none() && b.e_max.is_none());
    assert!(b.note.is_some());

    let fam = FriedrichsFamily::refined(&model_at(&th, Level::Mixed, Level::Mixed), &g).unwrap();
    let b = fam.two_particle_branch(2, &sweep, Regime::Mixed).unwrap();
    assert_eq!(b.zeros_min.len(), 1);
    assert!(near(&b.zeros_min[0].point, &ORIGIN));
    assert!((b.fits_min[0].exponent - 2.0).abs() <= 0.1);
    assert!(b.e_max_at_threshold);

    let fam = FriedrichsFamily::refined(&model_at(&th, Level::Neg, Level::Neg), &g).unwrap();
    let b = fam.two_particle_branch(1, &sweep, Regime::Neg).unwrap();
    assert!(b.e_min.unwrap() < b.e_max.unwrap());
    assert!(b.e_max.unwrap() < fam.m());
    let fit = b.fits_max.iter().find(|f| near(&f.point, &CORNER)).unwrap();
    assert!((fit.exponent - 2.0).abs() <= 0.1);
    let csv = b.to_csv();
    assert_eq!(csv.lines().count(), 1 + sweep.points.len());
}
