mod common;

use common::{thresholds, Level};
use fockspec::model::quadratic_bounds_check;
use fockspec::spectrum::{essential_spectrum_with, sigma_region, FockState};
use fockspec::weinberg::{
    assemble_w, continuity_modulus, fixed_point_residual, hs_norm, kernel_majorant_check, singular_decay, xi,
};
use fockspec::{example_family, Error, ExampleParams, FriedrichsFamily, GridMode, PSweep, TorusGrid};

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(n, GridMode::Base, true).unwrap()
}

fn decoupled_family(n: usize, w0: f64) -> FriedrichsFamily {
    let model = example_family(&ExampleParams {
        c: [0.0; 3],
        d: [0.0; 3],
        w0,
        ..ExampleParams::default()
    })
    .unwrap();
    FriedrichsFamily::plain(&model, &grid(n)).unwrap()
}

fn max_abs(m: &faer::Mat<f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

#[test]
fn decoupled_operator() {
    let fam = decoupled_family(2, 1.0);
    let z = -0.75;
    let w = assemble_w(&fam, z).unwrap();
    assert_eq!(w.layout(), [1, 8, 36]);
    assert_eq!(w.xi, (1.0, 1.0));
    assert!((w.block(0, 0)[(0, 0)] - (1.0 + z - 1.0)).abs() < 1e-15);
    for i in 0..3 {
        for j in 0..3 {
            if (i, j) != (0, 0) {
                assert_eq!(max_abs(&w.block(i, j)), 0.0, "block {i}{j}");
            }
        }
    }
    for b in hs_norm(&w).unwrap() {
        if b.block != "W00" {
            assert_eq!(b.hs_norm, 0.0, "{}", b.block);
        }
    }
}

#[test]
fn vacuum_entry_vanishes_at_shifted_level() {
    let fam = decoupled_family(2, 0.4);
    let w = assemble_w(&fam, 0.4 - 1.0).unwrap();
    assert_eq!(w.block(0, 0)[(0, 0)], 0.0);
}

#[test]
fn vacuum_to_pair_block_is_zero() {
    let th = thresholds(GridMode::Base);
    let model = example_family(&ExampleParams {
        v0_amplitude: 0.3,
        ..common::params_at(&th, Level::Mixed, Level::Mixed)
    })
    .unwrap();
    let fam = FriedrichsFamily::plain(&model, &grid(3)).unwrap();
    let w = assemble_w(&fam, -8.0).unwrap();
    assert_eq!(max_abs(&w.block(0, 2)), 0.0);
    assert!(max_abs(&w.block(2, 0)) > 0.0);
}

#[test]
fn decoupled_fixed_point() {
    let w0 = -0.5;
    let fam = decoupled_family(2, w0);
    let w = assemble_w(&fam, w0).unwrap();
    let f = FockState {
        f0: 1.0,
        f1: vec![0.0; 8],
        f2: vec![0.0; 64],
    };
    let rep = fixed_point_residual(&w, &f);
    assert_eq!(rep.candidates.len(), 4);
    assert!(rep.best_residual < 1e-15);
}

#[test]
fn sign_factors() {
    let th = thresholds(GridMode::Base);
    let model = common::model_at(&th, Level::Neg, Level::Neg);
    let fam = FriedrichsFamily::refined(&model, &grid(4)).unwrap();
    let (ess, branches) = essential_spectrum_with(&fam, &PSweep::new(9).unwrap()).unwrap();
    assert_eq!(xi(&fam, ess.tau_ess - 0.1).unwrap(), (1.0, 1.0));
    let e_max = branches.iter().filter_map(|b| b.e_max).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(xi(&fam, 0.5 * (e_max + fam.m())).unwrap(), (-1.0, -1.0));
    let inside = 0.5 * (branches[0].e_min.unwrap() + branches[0].e_max.unwrap());
    assert!(matches!(xi(&fam, inside), Err(Error::ForbiddenRegion { .. })));
    assert!(matches!(xi(&fam, fam.m() + 1.0), Err(Error::Domain(_))));
}

#[test]
fn pair_block_norm_is_stable_under_refinement() {
    let th = thresholds(GridMode::Base);
    let model = common::model_at(&th, Level::Neg, Level::Neg);
    let norms: Vec<f64> = [3, 4]
        .iter()
        .map(|&n| {
            let fam = FriedrichsFamily::plain(&model, &grid(n)).unwrap();
            let w = assemble_w(&fam, -5.0).unwrap();
            hs_norm(&w).unwrap().into_iter().find(|b| b.block == "W22").unwrap().hs_norm
        })
        .collect();
    assert!(norms[0] > 0.0);
    assert!((norms[1] - norms[0]).abs() <= 0.05 * norms[0], "{norms:?}");
}

#[test]
fn singular_values_descend() {
    let th = thresholds(GridMode::Base);
    let fam = FriedrichsFamily::plain(&common::model_at(&th, Level::Mixed, Level::Mixed), &grid(3)).unwrap();
    let w = assemble_w(&fam, -6.0).unwrap();
    let s = singular_decay(&w, 6).unwrap();
    assert_eq!(s.len(), 6);
    assert!(s.windows(2).all(|p| p[0] >= p[1]));
}

#[test]
fn continuity_table() {
    let th = thresholds(GridMode::Base);
    let model = common::model_at(&th, Level::Mixed, Level::Mixed);
    let fam = FriedrichsFamily::refined(&model, &grid(4)).unwrap();
    let (ess, _) = essential_spectrum_with(&fam, &PSweep::new(5).unwrap()).unwrap();
    let sigma = sigma_region(&ess);
    let [lo, hi] = sigma.intervals[0];
    let zs = [lo + 0.1, lo + 0.1, 0.5 * (lo + hi)];
    let t = continuity_modulus(&fam, &sigma, &zs, 3).unwrap();
    assert_eq!(t.distance[0][1], 0.0);
    assert!(t.distance[0][2] > 0.0);
    assert_eq!(t.distance[0][2], t.distance[2][0]);
    assert!(matches!(continuity_modulus(&fam, &sigma, &[hi + 0.5], 3), Err(Error::Domain(_))));
}

#[test]
fn majorant_without_coupling() {
    let fam = decoupled_family(4, 1.0);
    let (_, branches) = essential_spectrum_with(&fam, &PSweep::new(5).unwrap()).unwrap();
    let bounds = quadratic_bounds_check(fam.model(), fam.grid(), 0.5).unwrap();
    let rep = kernel_majorant_check(&fam, &branches, &bounds, -0.5, 200).unwrap();
    assert_eq!(rep.window, "no_branch");
    assert!(rep.holds);
    assert_eq!(rep.worst_ratio, 0.0);
}
