use std::fmt::Write;

use fockspec::config::RunConfig;
use fockspec::friedrichs::BranchData;
use fockspec::model::{mu_thresholds, MuThresholds, RegimeClass};
use fockspec::spectrum::{
    assemble_operator, discrete_below_m, essential_spectrum_with, lowest_eigenvalues, sigma_region, verify_channel_embedding,
    DiscreteOptions, EssentialSpectrum, OperatorKind, SigmaSet, DEFAULT_PAIR_CAP,
};
use fockspec::weinberg::{
    assemble_w, compactness_report, continuity_modulus, edge_approach, fixed_point_residual, WEINBERG_PAIR_CAP,
};
use fockspec::{example_family, Error, ExampleParams, FriedrichsFamily, ModelFunctions, PSweep, Regime, Result, TorusGrid};
use serde::Serialize;
use serde_json::{json, Value};

/// Results payload plus plot-data files `(name, contents)`.
pub struct Outcome {
    pub results: Value,
    pub files: Vec<(String, String)>,
}

const EDGE_KS: [i32; 7] = [2, 3, 4, 5, 6, 7, 8];

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn refined_family(cfg: &RunConfig, model: &ModelFunctions) -> Result<FriedrichsFamily> {
    FriedrichsFamily::refined(model, &cfg.grid()?)
}

fn refine_grids(cfg: &RunConfig) -> Result<Vec<TorusGrid>> {
    cfg.refine
        .iter()
        .map(|&n| TorusGrid::new(n, cfg.grid_mode, cfg.grid_offset))
        .collect()
}

fn with_tolerance(rc: RegimeClass, tol: Option<f64>) -> RegimeClass {
    match tol {
        Some(t) => RegimeClass::from_extrema(rc.alpha, (rc.min_value, rc.argmin), (rc.max_value, rc.argmax), t),
        None => rc,
    }
}

fn thresholds(cfg: &RunConfig) -> Result<[MuThresholds; 2]> {
    let grid = cfg.grid()?;
    Ok([
        mu_thresholds(&cfg.params, 1, &grid)?,
        mu_thresholds(&cfg.params, 2, &grid)?,
    ])
}

pub fn classify(cfg: &RunConfig) -> Result<Outcome> {
    let th = thresholds(cfg)?;
    let grid = cfg.grid()?;
    let sweep = PSweep::new(cfg.sweep_n)?;
    let rows_in: Vec<(Option<f64>, ExampleParams)> = if cfg.mu_factors.is_empty() {
        vec![(None, cfg.params.clone())]
    } else {
        cfg.mu_factors
            .iter()
            .map(|&f| {
                let p = ExampleParams {
                    mu1: f * th[0].mu0,
                    mu2: f * th[1].mu0,
                    ..cfg.params.clone()
                };
                (Some(f), p)
            })
            .collect()
    };
    let mut rows = Vec::new();
    let mut csv = String::from("factor,mu1,mu2,regime1,regime2,min1,max1,min2,max2\n");
    for (factor, p) in rows_in {
        let fam = FriedrichsFamily::refined(&example_family(&p)?, &grid)?;
        let rc: Vec<RegimeClass> = (1..=2)
            .map(|a| fam.classify_regime(a, &sweep).map(|r| with_tolerance(r, cfg.tol)))
            .collect::<Result<_>>()?;
        let _ = writeln!(
            csv,
            "{},{:.12e},{:.12e},{},{},{:.9e},{:.9e},{:.9e},{:.9e}",
            factor.map(|f| f.to_string()).unwrap_or_default(),
            p.mu1,
            p.mu2,
            rc[0].regime,
            rc[1].regime,
            rc[0].min_value,
            rc[0].max_value,
            rc[1].min_value,
            rc[1].max_value
        );
        rows.push(json!({
            "factor": factor,
            "mu": [p.mu1, p.mu2],
            "regimes": to_value(&rc)?,
            "case_labels": rc.iter().map(|r| r.regime.case_label()).collect::<Vec<_>>(),
        }));
    }
    Ok(Outcome {
        results: json!({
            "thresholds": to_value(&th)?,
            "sweep_n": cfg.sweep_n,
            "rows": rows,
        }),
        files: vec![("classify.csv".into(), csv)],
    })
}

fn branch_summary(b: &BranchData) -> Result<Value> {
    Ok(json!({
        "alpha": b.alpha,
        "regime": b.regime,
        "e_min": b.e_min,
        "e_max": b.e_max,
        "e_max_at_threshold": b.e_max_at_threshold,
        "below_hull": b.below_hull,
        "above_hull": b.above_hull,
        "zeros_min": to_value(&b.zeros_min)?,
        "zeros_max": to_value(&b.zeros_max)?,
        "fits_min": to_value(&b.fits_min)?,
        "fits_max": to_value(&b.fits_max)?,
        "hessian_min": b.hessian_min,
        "positivity_min": b.positivity_min,
        "positivity_max": b.positivity_max,
        "max_delta_residual": b.samples.iter().map(|s| s.delta_residual).fold(0.0, f64::max),
        "note": b.note,
        "csv": format!("branches_alpha{}.csv", b.alpha),
    }))
}

pub fn branches(cfg: &RunConfig) -> Result<Outcome> {
    let model = example_family(&cfg.params)?;
    let fam = refined_family(cfg, &model)?;
    let (ess, data) = essential_spectrum_with(&fam, &PSweep::new(cfg.sweep_n)?)?;
    let rows = data.iter().map(branch_summary).collect::<Result<Vec<_>>>()?;
    let files = data
        .iter()
        .map(|b| (format!("branches_alpha{}.csv", b.alpha), b.to_csv()))
        .collect();
    Ok(Outcome {
        results: json!({
            "m": ess.m,
            "big_m": ess.big_m,
            "branches": rows,
        }),
        files,
    })
}

fn essential(cfg: &RunConfig, model: &ModelFunctions) -> Result<(FriedrichsFamily, EssentialSpectrum, SigmaSet)> {
    let fam = refined_family(cfg, model)?;
    let (ess, _) = essential_spectrum_with(&fam, &PSweep::new(cfg.sweep_n)?)?;
    if ess.intervals.len() > 4 {
        return Err(Error::InvariantViolation(format!(
            "essential spectrum has {} intervals, at most 4 are possible",
            ess.intervals.len()
        )));
    }
    let sigma = sigma_region(&ess);
    Ok((fam, ess, sigma))
}

pub fn spectrum(cfg: &RunConfig) -> Result<Outcome> {
    let model = example_family(&cfg.params)?;
    let (fam, ess, sigma) = essential(cfg, &model)?;
    let grids = refine_grids(cfg)?;
    let mut opts = DiscreteOptions::for_scale(fam.scale());
    opts.seed = cfg.seed;
    if let Some(t) = cfg.tol {
        opts.stability = t;
    }
    let discrete = discrete_below_m(&model, &grids, &sigma, &ess.regimes, &opts)?;
    let embedding = match grids.first() {
        Some(g) => Some(verify_channel_embedding(&model, g, cfg.seed)?),
        None => None,
    };
    let mut csv = String::from("n,dim,count,excluded,edge_distance,eigenvalues\n");
    for r in &discrete.rows {
        let vals: Vec<String> = r.eigenvalues.iter().map(|e| format!("{:.12e}", e.value)).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.n,
            r.dim,
            r.count,
            r.excluded,
            r.edge_distance.map(|d| format!("{d:.9e}")).unwrap_or_default(),
            vals.join(";")
        );
    }
    Ok(Outcome {
        results: json!({
            "essential": to_value(&ess)?,
            "sigma": to_value(&sigma)?,
            "discrete": to_value(&discrete)?,
            "embedding": to_value(&embedding)?,
        }),
        files: vec![("refinement.csv".into(), csv)],
    })
}

/// Refinement grids small enough for dense assembly of `W(z)`.
fn weinberg_grids(cfg: &RunConfig) -> Result<Vec<TorusGrid>> {
    let grids: Vec<TorusGrid> = refine_grids(cfg)?
        .into_iter()
        .filter(|g| g.len() * (g.len() + 1) / 2 <= WEINBERG_PAIR_CAP)
        .collect();
    if grids.is_empty() {
        return Err(Error::Resource(format!(
            "no refinement grid has at most {WEINBERG_PAIR_CAP} symmetric pairs"
        )));
    }
    Ok(grids)
}

fn error_row(z: f64, e: &Error) -> Value {
    json!({ "z": z, "error": e.to_string() })
}

pub fn weinberg(cfg: &RunConfig) -> Result<Outcome> {
    let model = example_family(&cfg.params)?;
    let (fam, ess, sigma) = essential(cfg, &model)?;
    let grids = weinberg_grids(cfg)?;
    let finest = grids.last().unwrap().clone();
    let fam_w = FriedrichsFamily::refined(&model, &finest)?;
    let m = fam.m();
    let zs: Vec<f64> = if cfg.z_list.is_empty() {
        sigma
            .intervals
            .iter()
            .flat_map(|iv| [0.25, 0.75].map(|t| iv[0] + t * (iv[1] - iv[0])))
            .collect()
    } else {
        cfg.z_list.clone()
    };

    let mut points = Vec::new();
    for &z in &zs {
        match compactness_report(&model, &grids, z, &[], &EDGE_KS, cfg.seed) {
            Ok(rep) => points.push(json!({
                "z": z,
                "in_sigma": sigma.contains(z),
                "xi": rep.xi,
                "blocks": to_value(&rep.blocks)?,
                "singular_values": rep.singular_values,
                "resolutions": rep.resolutions,
            })),
            Err(e) => points.push(error_row(z, &e)),
        }
    }

    let inside: Vec<f64> = zs.iter().copied().filter(|&z| sigma.contains(z)).collect();
    let continuity = if inside.len() >= 2 {
        Some(to_value(&continuity_modulus(&fam_w, &sigma, &inside, cfg.seed)?)?)
    } else {
        None
    };

    let mut edges = vec![(m, -1.0)];
    let tol = 1e-9 * fam.scale();
    if ess.regimes.iter().any(|r| r.regime == Regime::Neg) {
        if let Some(e_max) = sigma.e_max.filter(|&e| e < m - tol) {
            edges.push((e_max, 1.0));
        }
    }
    let mut edge_rows = Vec::new();
    let mut csv = String::from("edge,k,z,distance\n");
    for (edge, side) in edges {
        match edge_approach(&fam_w, edge, side, &EDGE_KS, cfg.seed) {
            Ok(a) => {
                for ((k, z), d) in EDGE_KS.iter().zip(&a.z).zip(&a.distance) {
                    let _ = writeln!(csv, "{edge:.12e},{k},{z:.12e},{d:.9e}");
                }
                edge_rows.push(to_value(&a)?);
            }
            Err(e) => edge_rows.push(error_row(edge, &e)),
        }
    }

    let mut opts = DiscreteOptions::for_scale(fam.scale());
    opts.seed = cfg.seed;
    let discrete = discrete_below_m(&model, std::slice::from_ref(&finest), &sigma, &ess.regimes, &opts)?;
    let targets: Vec<f64> = discrete.rows[0].eigenvalues.iter().map(|e| e.value).collect();
    let fixed_points = fixed_points(&model, &finest, &targets, cfg.seed)?;
    Ok(Outcome {
        results: json!({
            "grid_n": finest.n_per_axis(),
            "points": points,
            "continuity": continuity,
            "edges": edge_rows,
            "fixed_points": fixed_points,
        }),
        files: vec![("weinberg_edges.csv".into(), csv)],
    })
}

/// Fixed-point residuals at the discrete eigenvalues `targets` of the
/// discretized `H`, and at a shifted spectral parameter for comparison.
fn fixed_points(model: &ModelFunctions, grid: &TorusGrid, targets: &[f64], seed: u64) -> Result<Vec<Value>> {
    let Some(top) = targets.iter().copied().reduce(f64::max) else {
        return Ok(vec![]);
    };
    let fam = FriedrichsFamily::plain(model, grid)?;
    let op = assemble_operator(OperatorKind::H, model, grid, None, DEFAULT_PAIR_CAP)?;
    let tol = 1e-9 * fam.scale();
    let eig = lowest_eigenvalues(&op, 64, top + tol, seed)?;
    let dz = 1e-2 * fam.scale();
    let mut rows = Vec::new();
    for ((&z, v), &res) in eig.values.iter().zip(&eig.vectors).zip(&eig.residuals) {
        if !targets.iter().any(|t| (t - z).abs() <= tol) {
            continue;
        }
        let f = op.decode(v);
        let row = match assemble_w(&fam, z) {
            Ok(w) => {
                let rep = fixed_point_residual(&w, &f);
                let shifted = assemble_w(&fam, z - dz)
                    .or_else(|_| assemble_w(&fam, z + dz))
                    .map(|w| fixed_point_residual(&w, &f).best_residual)
                    .ok();
                json!({
                    "z": z,
                    "eigen_residual": res,
                    "candidates": to_value(&rep.candidates)?,
                    "best": rep.best,
                    "best_residual": rep.best_residual,
                    "shifted_best_residual": shifted,
                })
            }
            Err(e) => error_row(z, &e),
        };
        rows.push(row);
    }
    Ok(rows)
}
