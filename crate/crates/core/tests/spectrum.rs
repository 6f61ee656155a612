mod common;

use common::{thresholds, Level};
use fockspec::eigen::SymmetricOperator;
use fockspec::model::{eps, RegimeClass};
use fockspec::spectrum::{
    assemble_operator, discrete_below_m, essential_spectrum, essential_spectrum_with, lowest_eigenvalues, sigma_region,
    tau_ess, verify_channel_embedding, BranchContribution, DiscreteOptions, EssentialSpectrum, OperatorKind, DEFAULT_PAIR_CAP,
};
use fockspec::{example_family, ExampleParams, FriedrichsFamily, GridMode, ModelFunctions, PSweep, Regime, TorusGrid};

fn grid(n: usize, mode: GridMode) -> TorusGrid {
    TorusGrid::new(n, mode, true).unwrap()
}

fn decoupled(w0: f64) -> ModelFunctions {
    example_family(&ExampleParams {
        c: [0.0; 3],
        d: [0.0; 3],
        w0,
        ..ExampleParams::default()
    })
    .unwrap()
}

#[test]
fn decoupled_essential_spectrum() {
    let (ess, _) = essential_spectrum(&decoupled(1.0), &grid(8, GridMode::Base), &PSweep::new(5).unwrap()).unwrap();
    assert_eq!(ess.intervals, vec![[0.0, 12.0]]);
    assert!(ess.regimes.iter().all(|r| r.regime == Regime::Pos));
    assert_eq!(tau_ess(&ess), 0.0);
}

#[test]
fn regimes_shape_the_essential_spectrum() {
    let th = thresholds(GridMode::Base);
    let g = grid(8, GridMode::Base);
    let sweep = PSweep::new(9).unwrap();
    let ess = |l1, l2| {
        let fam = FriedrichsFamily::refined(&common::model_at(&th, l1, l2), &g).unwrap();
        essential_spectrum_with(&fam, &sweep).unwrap().0
    };

    let pos = ess(Level::Pos, Level::Pos);
    assert_eq!(pos.intervals, vec![[pos.m, pos.big_m]]);
    assert_eq!(tau_ess(&pos), pos.m);

    let mixed = ess(Level::Mixed, Level::Pos);
    assert_eq!(mixed.intervals.len(), 1);
    assert!(tau_ess(&mixed) < mixed.m);

    let neg = ess(Level::Neg, Level::Pos);
    let below: Vec<_> = neg.intervals.iter().filter(|iv| iv[1] < neg.m).collect();
    assert_eq!(below.len(), 1);
    let c = &neg.contributions[0];
    assert!((below[0][0] - c.e_min.unwrap()).abs() < 1e-12);
    assert!((below[0][1] - c.e_max.unwrap()).abs() < 1e-12);
    for e in [pos, mixed, neg] {
        assert!(e.intervals.len() <= 4);
        assert!(e.intervals.iter().any(|iv| iv[0] <= e.m && iv[1] >= e.big_m));
    }
}

fn contribution(alpha: usize, regime: Regime, e: Option<[f64; 2]>) -> BranchContribution {
    BranchContribution {
        alpha,
        regime,
        case_label: regime.case_label().into(),
        e_min: e.map(|x| x[0]),
        e_max: e.map(|x| x[1]),
        e_max_at_threshold: regime == Regime::Mixed,
        below: e,
        above: None,
        restricted: vec![],
        expected: vec![],
        matches_case: true,
    }
}

fn synthetic(parts: [(Regime, Option<[f64; 2]>); 2]) -> EssentialSpectrum {
    let (m, big_m) = (0.0, 12.0);
    let mut intervals: Vec<[f64; 2]> = parts.iter().filter_map(|(_, e)| *e).collect();
    intervals.push([m, big_m]);
    intervals.sort_by(|a, b| a[0].total_cmp(&b[0]));
    intervals.dedup();
    let mut merged: Vec<[f64; 2]> = Vec::new();
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => merged.push(iv),
        }
    }
    let tau = merged[0][0];
    let regimes = (0..2)
        .map(|i| RegimeClass {
            alpha: i + 1,
            regime: parts[i].0,
            min_value: 0.0,
            max_value: 0.0,
            argmin: [0.0; 3],
            argmax: [0.0; 3],
            tolerance: 0.0,
        })
        .collect();
    EssentialSpectrum {
        m,
        big_m,
        intervals: merged,
        tau_ess: tau,
        regimes,
        contributions: vec![contribution(1, parts[0].0, parts[0].1), contribution(2, parts[1].0, parts[1].1)],
    }
}

#[test]
fn sigma_cases() {
    let s = sigma_region(&synthetic([(Regime::Pos, None), (Regime::Pos, None)]));
    assert_eq!(s.case, "i");
    assert_eq!(s.intervals, vec![[-1.0, 0.0]]);

    let s = sigma_region(&synthetic([(Regime::Pos, None), (Regime::Mixed, Some([-2.5, 0.0]))]));
    assert_eq!(s.case, "iii");
    assert_eq!(s.intervals, vec![[-3.5, -2.5]]);

    let s = sigma_region(&synthetic([(Regime::Neg, Some([-4.0, -1.5])), (Regime::Neg, Some([-4.0, -1.5]))]));
    assert_eq!(s.case, "vi");
    assert_eq!(s.intervals, vec![[-5.0, -4.0], [-1.5, 0.0]]);

    let s = sigma_region(&synthetic([(Regime::Neg, Some([-4.0, -1.5])), (Regime::Pos, None)]));
    assert_eq!(s.case, "iv");
    assert_eq!(s.edges(), vec![-5.0, -4.0, -1.5, 0.0]);
}

#[test]
fn decoupled_operator_is_diagonal() {
    let model = decoupled(0.7);
    let g = grid(2, GridMode::Base);
    let op = assemble_operator(OperatorKind::H, &model, &g, None, DEFAULT_PAIR_CAP).unwrap();
    assert_eq!(op.dim(), 45);
    let dense = fockspec::eigen::dense_lowest(&op, 45, f64::INFINITY).unwrap();
    let mut expected = vec![0.7];
    expected.extend(std::iter::repeat_n(1.0, 8));
    let nodes = g.nodes();
    for i in 0..8 {
        for j in i..8 {
            expected.push(eps(&nodes[i]) + eps(&nodes[j]));
        }
    }
    expected.sort_by(f64::total_cmp);
    for (a, b) in dense.values.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    let low = lowest_eigenvalues(&op, 5, 0.9, 1).unwrap();
    assert_eq!(low.values.len(), 1);
    assert!((low.values[0] - 0.7).abs() < 1e-12);
    assert!(low.truncated);
}

#[test]
fn assembled_operator_is_symmetric() {
    let th = thresholds(GridMode::Base);
    let model = example_family(&ExampleParams {
        v0_amplitude: 0.3,
        ..common::params_at(&th, Level::Neg, Level::Mixed)
    })
    .unwrap();
    for (n, mode) in [(3, GridMode::Base), (2, GridMode::DoubleCover)] {
        let op = assemble_operator(OperatorKind::H, &model, &grid(n, mode), None, DEFAULT_PAIR_CAP).unwrap();
        assert!(op.symmetry_defect(8, 5) <= 1e-12);
    }
}

#[test]
fn decoupled_vacuum_level_below_threshold() {
    let model = decoupled(-0.5);
    let fam = FriedrichsFamily::refined(&model, &grid(8, GridMode::Base)).unwrap();
    let (ess, _) = essential_spectrum_with(&fam, &PSweep::new(5).unwrap()).unwrap();
    let sigma = sigma_region(&ess);
    let grids: Vec<TorusGrid> = [2, 3, 4].iter().map(|&n| grid(n, GridMode::Base)).collect();
    let rep = discrete_below_m(&model, &grids, &sigma, &ess.regimes, &DiscreteOptions::for_scale(fam.scale())).unwrap();
    assert!(rep.count_stable);
    for row in &rep.rows {
        assert_eq!(row.count, 1);
        assert!((row.eigenvalues[0].value + 0.5).abs() < 1e-12);
    }
}

#[test]
fn embedding_without_second_form_factor() {
    let model = example_family(&ExampleParams {
        d: [0.0; 3],
        ..ExampleParams::default()
    })
    .unwrap();
    let rep = verify_channel_embedding(&model, &grid(2, GridMode::DoubleCover), 3).unwrap();
    assert!(rep.checks.iter().all(|c| c.channel == 1));
    assert!(rep.all_passed);
}

#[test]
fn embedding_on_both_tori() {
    let th = thresholds(GridMode::DoubleCover);
    let model = example_family(&ExampleParams {
        mu2: 2.0 * th[1].mu1,
        ..ExampleParams::default()
    })
    .unwrap();
    let dc = verify_channel_embedding(&model, &grid(4, GridMode::DoubleCover), 3).unwrap();
    assert!(dc.checks.iter().any(|c| c.channel == 2));
    assert!(dc.all_passed);

    let base = verify_channel_embedding(&model, &grid(4, GridMode::Base), 3).unwrap();
    let worst = base.checks.iter().filter(|c| c.channel == 2).map(|c| c.coupling).fold(0.0, f64::max);
    assert!(worst > 1e-11, "{worst}");
}
