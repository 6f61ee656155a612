//! The fibre operators `h(p)`: Fredholm determinants, their roots and the
//! two-particle branch of the essential spectrum.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{torus_distance, Point, Quadrature, TorusGrid};
use crate::model::{
    hessian, scale_of, symmetric_eigenvalues, wrap_point, ModelFunctions, PSweep, Regime, RegimeClass,
    HESSIAN_STEP,
};
use crate::optimize::{nelder_mead, parabolic_minimize, NelderMeadOptions};

pub const ROOT_TOL: f64 = 1e-11;
pub const SCAN_WINDOW: f64 = 1e3;
pub const ABOVE_OFFSET: f64 = 1e-8;
pub const ORDER_FIT_DELTA: f64 = 0.5;
pub const ZERO_MERGE_RADIUS: f64 = 1e-3;
pub const ZERO_STARTS: usize = 8;
pub const REFINE_SWEEPS: usize = 22;

struct LevelData {
    nodes: Vec<Point>,
    weight: f64,
    v1: Vec<f64>,
    v2: Vec<f64>,
    e: Option<Vec<f64>>,
}

/// Per-level weighted integrals against `1/(w2(p,s) - z)` and its square.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    i11: f64,
    i22: f64,
    i12: f64,
    j11: f64,
    j22: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeltaEvaluation {
    pub alpha: usize,
    pub p: Point,
    pub z: f64,
    pub value: f64,
    pub error: Option<f64>,
}

/// Fredholm determinants of `h_1(p)` and `h_2(p)` evaluated with a fixed
/// quadrature rule in the integration variable.
pub struct FriedrichsFamily {
    model: ModelFunctions,
    quad: Quadrature,
    levels: Vec<LevelData>,
    m: f64,
    big_m: f64,
    scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSource {
    Delta1Root,
    Delta2Root,
}

#[derive(Clone, Debug, Serialize)]
pub struct BelowRoot {
    pub root: Option<f64>,
    pub delta_at_threshold: f64,
    pub residual: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Root {
    pub alpha: usize,
    pub z: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RootScan {
    pub p: Point,
    pub fibre_min: f64,
    pub fibre_max: f64,
    pub below: [Option<f64>; 2],
    pub above: Vec<Root>,
    pub count: usize,
    pub max_residual: f64,
    pub notes: Vec<String>,
}

impl RootScan {
    pub fn roots(&self) -> Vec<Root> {
        let mut out: Vec<Root> = self
            .below
            .iter()
            .enumerate()
            .filter_map(|(i, z)| {
                z.map(|z| Root {
                    alpha: i + 1,
                    z,
                    residual: f64::NAN,
                })
            })
            .collect();
        out.extend(self.above.iter().cloned());
        out.sort_by(|a, b| a.z.total_cmp(&b.z));
        out
    }

    pub fn above_of(&self, alpha: usize) -> Vec<f64> {
        self.above.iter().filter(|r| r.alpha == alpha).map(|r| r.z).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HSpectrum {
    pub p: Point,
    pub eigenvalues: Vec<Root>,
    pub max_cross_term: f64,
    /// `|Δ1 Δ2 - ½ X²|` at each eigenvalue.
    pub determinant_residuals: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HpEigenpair {
    pub p: Point,
    pub z: f64,
    pub f0: f64,
    pub f1: Vec<f64>,
    pub c_f1: f64,
    pub source: RootSource,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSample {
    pub p: Point,
    pub z_below: Option<f64>,
    pub z_above: Vec<f64>,
    pub delta_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZeroPoint {
    pub point: Point,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderFit {
    pub point: Point,
    pub exponent: f64,
    /// Largest `C` with `|Δ| >= C r^exponent` on the sampled shells.
    pub constant: f64,
    pub radius: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchData {
    pub alpha: usize,
    pub regime: Regime,
    pub samples: Vec<BranchSample>,
    pub e_min: Option<f64>,
    pub e_max: Option<f64>,
    /// `E_max` equals `m` because the branch reaches the threshold.
    pub e_max_at_threshold: bool,
    pub zeros_min: Vec<ZeroPoint>,
    pub zeros_max: Vec<ZeroPoint>,
    pub fits_min: Vec<OrderFit>,
    pub fits_max: Vec<OrderFit>,
    /// Smallest Hessian eigenvalue of `Δ(·; E_min)` at each zero.
    pub hessian_min: Vec<f64>,
    /// `min Δ(·; E_min)` outside the δ-balls around the zeros.
    pub positivity_min: Option<f64>,
    /// `min -Δ(·; E_max)` outside the ρ-balls around the zeros.
    pub positivity_max: Option<f64>,
    pub delta: f64,
    pub rho: f64,
    /// Hull of the roots below `m(p)` over the sweep.
    pub below_hull: Option<[f64; 2]>,
    /// Hull of the roots above `M(p)` over the sweep.
    pub above_hull: Option<[f64; 2]>,
    pub note: Option<String>,
}

impl BranchData {
    /// Writes the sweep as CSV with columns
    /// `p1,p2,p3,z_below,z_above1,z_above2,delta_residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p1,p2,p3,z_below,z_above1,z_above2,delta_residual\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.15e}")).unwrap_or_default();
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{},{},{},{:.3e}",
                s.p[0],
                s.p[1],
                s.p[2],
                opt(s.z_below),
                opt(s.z_above.first().copied()),
                opt(s.z_above.get(1).copied()),
                s.delta_residual
            );
        }
        out
    }
}

impl FriedrichsFamily {
    pub fn new(model: &ModelFunctions, quad: Quadrature) -> Result<Self> {
        let levels = quad
            .levels()
            .iter()
            .map(|g| LevelData {
                nodes: g.nodes().to_vec(),
                weight: g.weight(),
                v1: g.nodes().iter().map(|s| (model.v1)(s)).collect(),
                v2: g.nodes().iter().map(|s| (model.v2)(s)).collect(),
                e: model.separable.as_ref().map(|e| g.nodes().iter().map(|s| e(s)).collect()),
            })
            .collect::<Vec<_>>();
        for lvl in &levels {
            if let Some(i) = lvl.v1.iter().chain(&lvl.v2).position(|v| !v.is_finite()) {
                return Err(Error::NumericDomain(format!(
                    "non-finite form factor sample at node {}",
                    i % lvl.nodes.len()
                )));
            }
        }
        let finest = quad.levels().last().expect("at least one level");
        let (m, big_m) = model.bounds(finest);
        Ok(Self {
            model: model.clone(),
            quad,
            levels,
            m,
            big_m,
            scale: scale_of(m, big_m),
        })
    }

    /// Plain quadrature on `grid`.
    pub fn plain(model: &ModelFunctions, grid: &TorusGrid) -> Result<Self> {
        Self::new(model, Quadrature::plain(grid.clone()))
    }

    /// Three-level Richardson quadrature starting at `grid`.
    pub fn refined(model: &ModelFunctions, grid: &TorusGrid) -> Result<Self> {
        Self::new(model, Quadrature::richardson(grid.clone())?)
    }

    pub fn model(&self) -> &ModelFunctions {
        &self.model
    }

    pub fn grid(&self) -> &TorusGrid {
        self.quad.grid()
    }

    pub fn is_refined(&self) -> bool {
        self.quad.is_refined()
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `(m(p), M(p))`.
    pub fn fibre_bounds(&self, p: &Point) -> (f64, f64) {
        let finest = &self.levels[self.levels.len() - 1];
        self.model.fibre_bounds(p, &finest.nodes)
    }

    fn level_moments(&self, lvl: &LevelData, p: &Point, z: f64, squares: bool) -> Result<Moments> {
        let n = lvl.nodes.len();
        let mut mo = Moments::default();
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        let denom = |s: usize| -> f64 {
            match (&lvl.e, &self.model.separable) {
                (Some(e), Some(_)) => e[s],
                _ => (self.model.w2)(p, &lvl.nodes[s]),
            }
        };
        let shift = match &self.model.separable {
            Some(e) if lvl.e.is_some() => e(p) - z,
            _ => -z,
        };
        if let (Some(e), Some(_)) = (&lvl.e, &self.model.separable) {
            // Four independent lanes so the loop vectorizes.
            const L: usize = 4;
            let mut acc = [[0.0f64; L]; 5];
            let mut lo = [f64::INFINITY; L];
            let mut hi = [f64::NEG_INFINITY; L];
            let chunks = n / L;
            for c in 0..chunks {
                for l in 0..L {
                    let s = c * L + l;
                    let d = e[s] + shift;
                    lo[l] = if d < lo[l] { d } else { lo[l] };
                    hi[l] = if d > hi[l] { d } else { hi[l] };
                    let g = 1.0 / d;
                    let a = lvl.v1[s];
                    let b = lvl.v2[s];
                    acc[0][l] += a * a * g;
                    acc[1][l] += b * b * g;
                    acc[2][l] += a * b * g;
                    acc[3][l] += a * a * g * g;
                    acc[4][l] += b * b * g * g;
                }
            }
            for s in chunks * L..n {
                let d = e[s] + shift;
                lo[0] = lo[0].min(d);
                hi[0] = hi[0].max(d);
                let g = 1.0 / d;
                let a = lvl.v1[s];
                let b = lvl.v2[s];
                acc[0][0] += a * a * g;
                acc[1][0] += b * b * g;
                acc[2][0] += a * b * g;
                acc[3][0] += a * a * g * g;
                acc[4][0] += b * b * g * g;
            }
            let sum = |k: usize| acc[k].iter().sum::<f64>();
            mo.i11 = sum(0);
            mo.i22 = sum(1);
            mo.i12 = sum(2);
            if squares {
                mo.j11 = sum(3);
                mo.j22 = sum(4);
            }
            dmin = lo.iter().copied().fold(f64::INFINITY, f64::min);
            dmax = hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        } else {
            for s in 0..n {
                let d = denom(s) + shift;
                dmin = dmin.min(d);
                dmax = dmax.max(d);
                let g = 1.0 / d;
                let a = lvl.v1[s];
                let b = lvl.v2[s];
                mo.i11 += a * a * g;
                mo.i22 += b * b * g;
                mo.i12 += a * b * g;
                if squares {
                    mo.j11 += a * a * g * g;
                    mo.j22 += b * b * g * g;
                }
            }
        }
        if dmin > 0.0 || dmax < 0.0 {
            let w = lvl.weight;
            mo.i11 *= w;
            mo.i22 *= w;
            mo.i12 *= w;
            mo.j11 *= w;
            mo.j22 *= w;
            return Ok(mo);
        }
        let at = |target: f64| (0..n).find(|&s| denom(s) + shift == target).unwrap_or(0);
        if dmin == 0.0 || dmax == 0.0 {
            let node = at(0.0);
            return Err(Error::SingularNode(format!(
                "w2(p, s) = z at node {node} {:?} for p = {p:?}, z = {z}",
                lvl.nodes[node]
            )));
        }
        let (m_p, _) = self.fibre_bounds(p);
        let (node, denominator) = if z < m_p { (at(dmin), dmin) } else { (at(dmax), dmax) };
        Err(Error::InconsistentThreshold {
            node,
            denominator,
            m_p,
        })
    }

    fn moments(&self, p: &Point, z: f64, squares: bool) -> Result<Vec<Moments>> {
        self.levels
            .iter()
            .map(|lvl| self.level_moments(lvl, p, z, squares))
            .collect()
    }

    fn combine<F: Fn(&Moments) -> f64>(&self, mo: &[Moments], f: F) -> (f64, Option<f64>) {
        let vals: Vec<f64> = mo.iter().map(f).collect();
        let est = self.quad.combine(&vals);
        (est.value, est.error)
    }

    fn check_band(&self, p: &Point, z: f64) -> Result<()> {
        let (lo, hi) = self.fibre_bounds(p);
        let tol = 1e-13 * self.scale;
        let at_edge = (z - lo).abs() <= tol || (z - hi).abs() <= tol;
        if at_edge {
            if !self.is_refined() {
                return Err(Error::SpectralBand { z, lo, hi });
            }
            return Ok(());
        }
        if z > lo && z < hi {
            return Err(Error::SpectralBand { z, lo, hi });
        }
        Ok(())
    }

    fn delta_from(&self, alpha: usize, p: &Point, z: f64, mo: &[Moments]) -> (f64, Option<f64>) {
        if alpha == 1 {
            let w1 = (self.model.w1)(p);
            let (i, e) = self.combine(mo, |m| m.i11);
            (w1 - z - 0.5 * i, e.map(|e| 0.5 * e))
        } else {
            let (i, e) = self.combine(mo, |m| m.i22);
            (1.0 - i, e)
        }
    }

    /// `Δ_α(p; z)` with an error estimate when the rule is refined.
    pub fn delta(&self, alpha: usize, p: &Point, z: f64) -> Result<DeltaEvaluation> {
        check_alpha(alpha)?;
        self.check_band(p, z)?;
        let mo = self.moments(p, z, false)?;
        let (value, error) = self.delta_from(alpha, p, z, &mo);
        Ok(DeltaEvaluation {
            alpha,
            p: *p,
            z,
            value,
            error,
        })
    }

    /// `Δ_α(p; z)` without the band check.
    pub fn delta_value(&self, alpha: usize, p: &Point, z: f64) -> Result<f64> {
        let mo = self.moments(p, z, false)?;
        Ok(self.delta_from(alpha, p, z, &mo).0)
    }

    /// Both determinants at once.
    pub fn deltas(&self, p: &Point, z: f64) -> Result<(f64, f64)> {
        let mo = self.moments(p, z, false)?;
        Ok((self.delta_from(1, p, z, &mo).0, self.delta_from(2, p, z, &mo).0))
    }

    /// `∂Δ_α/∂z`.
    pub fn delta_dz(&self, alpha: usize, p: &Point, z: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let mo = self.moments(p, z, true)?;
        Ok(if alpha == 1 {
            -1.0 - 0.5 * self.combine(&mo, |m| m.j11).0
        } else {
            -self.combine(&mo, |m| m.j22).0
        })
    }

    fn value_and_slope(&self, alpha: usize, p: &Point, z: f64) -> Result<(f64, f64)> {
        let mo = self.moments(p, z, true)?;
        let v = self.delta_from(alpha, p, z, &mo).0;
        let d = if alpha == 1 {
            -1.0 - 0.5 * self.combine(&mo, |m| m.j11).0
        } else {
            -self.combine(&mo, |m| m.j22).0
        };
        Ok((v, d))
    }

    /// Cross term `∫ v1 v2 / (w2(p, s) - z) ds`.
    pub fn cross_term(&self, p: &Point, z: f64) -> Result<f64> {
        let mo = self.moments(p, z, false)?;
        Ok(self.combine(&mo, |m| m.i12).0)
    }

    /// `Δ_α(p; z)` at every node of the base grid.
    pub fn delta_at_nodes(&self, alpha: usize, z: f64) -> Result<Vec<f64>> {
        self.grid()
            .nodes()
            .par_iter()
            .map(|p| self.delta_value(alpha, p, z))
            .collect()
    }

    /// Value at the lower threshold `m(p)`, or just below it when a node sits
    /// on the singularity.
    fn threshold_value(&self, alpha: usize, p: &Point, m_p: f64) -> Result<(f64, f64)> {
        match self.delta_value(alpha, p, m_p) {
            Ok(v) => Ok((m_p, v)),
            Err(Error::SingularNode(_)) => {
                let z = m_p - 1e-6 * self.scale;
                Ok((z, self.delta_value(alpha, p, z)?))
            }
            Err(e) => Err(e),
        }
    }

    /// Solves `Δ_α(p; z) = 0` on `[lo, hi]` given a sign change, by Newton
    /// steps safeguarded with bisection.
    fn solve_bracket(&self, alpha: usize, p: &Point, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<(f64, f64)> {
        let sign_lo = f_lo.signum();
        let tol_f = ROOT_TOL * self.scale;
        let mut z = lo;
        let mut best = (z, f64::INFINITY);
        for _ in 0..200 {
            let (v, d) = self.value_and_slope(alpha, p, z)?;
            if v.abs() < best.1 {
                best = (z, v.abs());
            }
            if v.abs() <= tol_f {
                break;
            }
            if v.signum() == sign_lo {
                lo = z;
            } else {
                hi = z;
            }
            if hi - lo <= 4.0 * f64::EPSILON * z.abs().max(self.scale) {
                break;
            }
            let newton = z - v / d;
            z = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(best)
    }

    /// The unique root of `Δ_α(p; ·)` in `(-∞, m(p))`, if any.
    pub fn eigenvalue_below(&self, alpha: usize, p: &Point) -> Result<BelowRoot> {
        check_alpha(alpha)?;
        let (m_p, _) = self.fibre_bounds(p);
        let (z_top, v_top) = self.threshold_value(alpha, p, m_p)?;
        if v_top >= 0.0 {
            return Ok(BelowRoot {
                root: None,
                delta_at_threshold: v_top,
                residual: None,
                diagnostic: None,
            });
        }
        // Walk down from the threshold until Δ turns positive.
        let mut z_hi = z_top;
        let mut z_lo = z_top;
        let mut v_lo = v_top;
        let mut step = 0.25 * self.scale;
        while v_lo <= 0.0 && step <= SCAN_WINDOW * self.scale {
            z_hi = z_lo;
            z_lo = m_p - step;
            v_lo = self.delta_value(alpha, p, z_lo)?;
            step *= 2.0;
        }
        if v_lo <= 0.0 {
            return Ok(BelowRoot {
                root: None,
                delta_at_threshold: v_top,
                residual: None,
                diagnostic: Some(format!(
                    "no sign change on [{z_lo}, {z_top}]: Delta_{alpha} = {v_lo:e} at the lower end"
                )),
            });
        }
        let (z, res) = self.solve_bracket(alpha, p, z_lo, z_hi, v_lo)?;
        Ok(BelowRoot {
            root: Some(z),
            delta_at_threshold: v_top,
            residual: Some(res),
            diagnostic: None,
        })
    }

    /// Roots above `M(p)`. Both determinants are strictly decreasing there,
    /// so a sign change between the ends of the window brackets the only one.
    fn roots_above(&self, alpha: usize, p: &Point, big_m_p: f64, notes: &mut Vec<String>) -> Result<Vec<Root>> {
        let z_lo = big_m_p + ABOVE_OFFSET * self.scale;
        let z_hi = big_m_p + SCAN_WINDOW * self.scale;
        let v_lo = self.delta_value(alpha, p, z_lo)?;
        let v_hi = self.delta_value(alpha, p, z_hi)?;
        if v_lo > 0.0 && v_hi < 0.0 {
            let (z, residual) = self.solve_bracket(alpha, p, z_lo, z_hi, v_lo)?;
            return Ok(vec![Root { alpha, z, residual }]);
        }
        if v_lo < 0.0 && v_hi > 0.0 {
            notes.push(format!("Delta_{alpha} increases above M(p) at p = {p:?}"));
        }
        Ok(vec![])
    }

    fn branch_sample(&self, alpha: usize, p: &Point) -> Result<BranchSample> {
        let below = self.eigenvalue_below(alpha, p)?;
        let (_, big_m_p) = self.fibre_bounds(p);
        let mut notes = Vec::new();
        let above = self.roots_above(alpha, p, big_m_p, &mut notes)?;
        let delta_residual = above
            .iter()
            .map(|r| r.residual)
            .chain(below.residual)
            .fold(0.0, f64::max);
        Ok(BranchSample {
            p: *p,
            z_below: below.root,
            z_above: above.into_iter().map(|r| r.z).collect(),
            delta_residual,
        })
    }

    /// All real roots of `Δ1(p; ·)` and `Δ2(p; ·)` outside `[m(p), M(p)]`.
    pub fn roots_full_scan(&self, p: &Point) -> Result<RootScan> {
        let (m_p, big_m_p) = self.fibre_bounds(p);
        let mut notes = Vec::new();
        let mut below = [None, None];
        let mut max_residual: f64 = 0.0;
        for alpha in 1..=2 {
            let r = self.eigenvalue_below(alpha, p)?;
            if let Some(d) = r.diagnostic {
                notes.push(d);
            }
            below[alpha - 1] = r.root;
            if let Some(res) = r.residual {
                max_residual = max_residual.max(res);
            }
        }
        let mut above = self.roots_above(1, p, big_m_p, &mut notes)?;
        above.extend(self.roots_above(2, p, big_m_p, &mut notes)?);
        for r in &above {
            max_residual = max_residual.max(r.residual);
        }
        let count = below.iter().filter(|r| r.is_some()).count() + above.len();
        Ok(RootScan {
            p: *p,
            fibre_min: m_p,
            fibre_max: big_m_p,
            below,
            above,
            count,
            max_residual,
            notes,
        })
    }

    /// Discrete eigenvalues of `h(p)`, valid when the cross term vanishes.
    pub fn h_spectrum_discrete(&self, p: &Point) -> Result<HSpectrum> {
        let scan = self.roots_full_scan(p)?;
        let tol = 1e-12 * self.scale;
        let mut max_cross: f64 = 0.0;
        let mut det = Vec::new();
        let mut probes: Vec<f64> = scan.roots().iter().map(|r| r.z).collect();
        probes.push(scan.fibre_min - 1.0);
        probes.push(scan.fibre_max + 1.0);
        for &z in &probes {
            let x = self.cross_term(p, z)?;
            max_cross = max_cross.max(x.abs());
        }
        if max_cross > tol {
            return Err(Error::DecouplingViolated {
                magnitude: max_cross,
                tolerance: tol,
            });
        }
        let mut eigenvalues = Vec::new();
        for mut r in scan.roots() {
            let (d1, d2) = self.deltas(p, r.z)?;
            let x = self.cross_term(p, r.z)?;
            det.push((d1 * d2 - 0.5 * x * x).abs());
            r.residual = if r.alpha == 1 { d1.abs() } else { d2.abs() };
            eigenvalues.push(r);
        }
        Ok(HSpectrum {
            p: *p,
            eigenvalues,
            max_cross_term: max_cross,
            determinant_residuals: det,
        })
    }

    /// Eigenvector of `h(p)` at an eigenvalue `z`, built on the base grid.
    pub fn reconstruct_h_eigenvector(&self, p: &Point, z: f64) -> Result<HpEigenpair> {
        let lvl = &self.levels[0];
        let mo = self.level_moments(lvl, p, z, false)?;
        let w1 = (self.model.w1)(p);
        let d1 = w1 - z - 0.5 * mo.i11;
        let d2 = 1.0 - mo.i22;
        let x = mo.i12;
        let b = x / std::f64::consts::SQRT_2;
        let (a, c) = (d1, d2);
        // Symmetric 2x2 [[a, b], [b, c]]; it must be singular at an eigenvalue.
        let tr = a + c;
        let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
        let l_small = if tr >= 0.0 { 0.5 * (tr - disc) } else { 0.5 * (tr + disc) };
        let l_big = if tr >= 0.0 { 0.5 * (tr + disc) } else { 0.5 * (tr - disc) };
        let rank_tol = 1e-7 * l_big.abs().max(1.0);
        if l_small.abs() > rank_tol {
            return Err(Error::NotAnEigenvalue(format!(
                "2x2 system at z = {z} has smallest eigenvalue {l_small:e} (Delta1 = {d1:e}, Delta2 = {d2:e})"
            )));
        }
        let (f0, cf) = if a.abs() + b.abs() >= b.abs() + c.abs() && a.abs() + b.abs() > 0.0 {
            (-b, a)
        } else if c.abs() + b.abs() > 0.0 {
            (c, -b)
        } else {
            (1.0, 0.0)
        };
        let source = if d1.abs() <= d2.abs() { RootSource::Delta1Root } else { RootSource::Delta2Root };
        let (f0, cf) = if source == RootSource::Delta2Root && b == 0.0 { (0.0, 1.0) } else { (f0, cf) };
        let f1: Vec<f64> = lvl
            .nodes
            .iter()
            .enumerate()
            .map(|(s, q)| {
                let d = (self.model.w2)(p, q) - z;
                (lvl.v2[s] * cf - lvl.v1[s] * f0 / std::f64::consts::SQRT_2) / d
            })
            .collect();
        let w = lvl.weight;
        let norm = (f0 * f0 + w * f1.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let (f0, f1, cf) = (f0 / norm, f1.iter().map(|v| v / norm).collect::<Vec<_>>(), cf / norm);
        // Residual of the discretized h(p) eigen-equation.
        let s1: f64 = w * lvl.v1.iter().zip(&f1).map(|(a, b)| a * b).sum::<f64>();
        let s2: f64 = w * lvl.v2.iter().zip(&f1).map(|(a, b)| a * b).sum::<f64>();
        let r0 = w1 * f0 + s1 / std::f64::consts::SQRT_2 - z * f0;
        let mut r2 = r0 * r0;
        for (s, q) in lvl.nodes.iter().enumerate() {
            let r = lvl.v1[s] * f0 / std::f64::consts::SQRT_2 + ((self.model.w2)(p, q) - z) * f1[s] - lvl.v2[s] * s2;
            r2 += w * r * r;
        }
        Ok(HpEigenpair {
            p: *p,
            z,
            f0,
            f1,
            c_f1: cf,
            source,
            residual: r2.sqrt(),
        })
    }

    /// Min and max of `Δ_α(·; m)` over the sweep, refined locally, with the
    /// sign pattern classified.
    pub fn classify_regime(&self, alpha: usize, sweep: &PSweep) -> Result<RegimeClass> {
        check_alpha(alpha)?;
        let z = self.m;
        let vals: Vec<f64> = sweep
            .points
            .par_iter()
            .map(|p| self.delta_value(alpha, p, z))
            .collect::<Result<_>>()?;
        let (imin, _) = argmin(&vals);
        let (imax, _) = argmin(&vals.iter().map(|v| -v).collect::<Vec<_>>());
        let h = 0.5 * sweep.spacing();
        let f = |sign: f64| {
            move |x: &[f64]| match self.delta_value(alpha, &[x[0], x[1], x[2]], z) {
                Ok(v) => sign * v,
                Err(_) => f64::INFINITY,
            }
        };
        let (xmin, fmin) = parabolic_minimize(f(1.0), &sweep.points[imin], h, REFINE_SWEEPS);
        let (xmax, fmax) = parabolic_minimize(f(-1.0), &sweep.points[imax], h, REFINE_SWEEPS);
        let (min_v, min_p) = if fmin < vals[imin] {
            (fmin, wrap_point(&[xmin[0], xmin[1], xmin[2]]))
        } else {
            (vals[imin], sweep.points[imin])
        };
        let (max_v, max_p) = if -fmax > vals[imax] {
            (-fmax, wrap_point(&[xmax[0], xmax[1], xmax[2]]))
        } else {
            (vals[imax], sweep.points[imax])
        };
        let err_at = |p: &Point| -> f64 {
            self.delta(alpha, p, z)
                .ok()
                .and_then(|d| d.error)
                .unwrap_or(0.0)
        };
        let tol = (1e-8 * self.scale).max(10.0 * err_at(&min_p).max(err_at(&max_p)));
        Ok(RegimeClass::from_extrema(alpha, (min_v, min_p), (max_v, max_p), tol))
    }

    fn below_or(&self, alpha: usize, p: &Point) -> Option<f64> {
        self.eigenvalue_below(alpha, p).ok().and_then(|r| r.root)
    }

    fn find_zeros(&self, alpha: usize, z: f64, sweep: &PSweep, values: &[f64]) -> Vec<ZeroPoint> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b)));
        let opts = NelderMeadOptions {
            initial_step: 0.25 * sweep.spacing(),
            max_evals: 600,
            x_tol: 1e-8,
            f_tol: 0.0,
        };
        let f = |x: &[f64]| {
            self.delta_value(alpha, &[x[0], x[1], x[2]], z)
                .map(f64::abs)
                .unwrap_or(f64::INFINITY)
        };
        let tol = 1e-6 * self.scale;
        let candidates: Vec<(Point, f64)> = order
            .iter()
            .take(ZERO_STARTS)
            .map(|&i| {
                let (x, fx) = nelder_mead(f, &sweep.points[i], &opts);
                (wrap_point(&[x[0], x[1], x[2]]), fx)
            })
            .collect();
        let mut zeros: Vec<ZeroPoint> = Vec::new();
        for (p, v) in candidates {
            if v > tol {
                continue;
            }
            if let Some(zp) = zeros.iter_mut().find(|zp| torus_distance(&zp.point, &p) < ZERO_MERGE_RADIUS) {
                if v < zp.value {
                    zp.point = p;
                    zp.value = v;
                }
            } else {
                zeros.push(ZeroPoint { point: p, value: v });
            }
        }
        zeros
    }

    /// Log-log fit of `|Δ_α(p* + r u; z)|` against `r` over `[δ/8, δ]`.
    pub fn order_fit(&self, alpha: usize, z: f64, point: &Point, delta: f64) -> Result<OrderFit> {
        let dirs = directions();
        let radii: Vec<f64> = (0..8).map(|j| delta * 2f64.powf(-3.0 + 3.0 * j as f64 / 7.0)).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut samples = Vec::new();
        for &r in &radii {
            for u in &dirs {
                let q = [point[0] + r * u[0], point[1] + r * u[1], point[2] + r * u[2]];
                let v = self.delta_value(alpha, &q, z)?.abs();
                if v > 0.0 {
                    xs.push(r.ln());
                    ys.push(v.ln());
                    samples.push((r, v));
                }
            }
        }
        let (slope, _, r2) = linear_fit(&xs, &ys);
        let constant = samples
            .iter()
            .map(|&(r, v)| v / r.powf(slope))
            .fold(f64::INFINITY, f64::min);
        Ok(OrderFit {
            point: *point,
            exponent: slope,
            constant,
            radius: delta,
            r_squared: r2,
        })
    }

    /// Smallest Hessian eigenvalue of `Δ_α(·; z)` at `point`.
    pub fn hessian_min_eigenvalue(&self, alpha: usize, z: f64, point: &Point) -> Result<f64> {
        let f = |x: &[f64]| self.delta_value(alpha, &[x[0], x[1], x[2]], z).unwrap_or(f64::NAN);
        let h = hessian(f, point, HESSIAN_STEP);
        let ev = symmetric_eigenvalues(&h);
        if ev.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain(format!("Hessian of Delta_{alpha} not finite at {point:?}")));
        }
        Ok(ev[0])
    }

    /// Two-particle branch of `h_α` over the sweep with its extremal values,
    /// zero sets and vanishing orders.
    pub fn two_particle_branch(&self, alpha: usize, sweep: &PSweep, regime: Regime) -> Result<BranchData> {
        check_alpha(alpha)?;
        let delta = ORDER_FIT_DELTA;
        let samples: Vec<BranchSample> = sweep
            .points
            .par_iter()
            .map(|p| self.branch_sample(alpha, p))
            .collect::<Result<_>>()?;
        let above: Vec<(usize, f64)> = samples
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.z_above.iter().map(move |&z| (i, z)))
            .collect();
        let above_hull = self.refine_hull(alpha, sweep, &above, false);
        let mut out = BranchData {
            alpha,
            regime,
            samples,
            e_min: None,
            e_max: None,
            e_max_at_threshold: false,
            zeros_min: Vec::new(),
            zeros_max: Vec::new(),
            fits_min: Vec::new(),
            fits_max: Vec::new(),
            hessian_min: Vec::new(),
            positivity_min: None,
            positivity_max: None,
            delta,
            rho: delta,
            below_hull: None,
            above_hull,
            note: None,
        };
        let below: Vec<(usize, f64)> = out
            .samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.z_below.map(|z| (i, z)))
            .collect();
        if below.is_empty() {
            if regime.has_branch() {
                return Err(Error::Inconsistency(format!(
                    "regime {regime} for alpha = {alpha} but no root of Delta_{alpha} below m(p) on the sweep"
                )));
            }
            out.note = Some(format!(
                "Delta_{alpha}(p; m) has no negative values on the sweep: the branch below m is empty"
            ));
            return Ok(out);
        }
        out.below_hull = self.refine_hull(alpha, sweep, &below, true);
        let [lo, hi] = out.below_hull.expect("non-empty");
        let e_min = lo;
        if e_min >= self.m {
            if regime.has_branch() {
                return Err(Error::Inconsistency(format!(
                    "regime {regime} for alpha = {alpha} but the branch minimum {e_min} is not below m = {}",
                    self.m
                )));
            }
            out.note = Some(format!(
                "the branch of Delta_{alpha} lies in [{lo}, {hi}] inside the band: nothing below m"
            ));
            return Ok(out);
        }
        let all_rooted = below.len() == out.samples.len();
        let (e_max, capped) = if all_rooted && hi < self.m { (hi, false) } else { (self.m, true) };
        out.e_min = Some(e_min);
        out.e_max = Some(e_max);
        out.e_max_at_threshold = capped;

        let vals_min: Vec<f64> = sweep
            .points
            .par_iter()
            .map(|p| self.delta_value(alpha, p, e_min))
            .collect::<Result<_>>()?;
        out.zeros_min = self.find_zeros(alpha, e_min, sweep, &vals_min);
        for zp in &out.zeros_min {
            out.fits_min.push(self.order_fit(alpha, e_min, &zp.point, delta)?);
            out.hessian_min.push(self.hessian_min_eigenvalue(alpha, e_min, &zp.point)?);
        }
        out.positivity_min = outside_extreme(sweep, &vals_min, &out.zeros_min, delta, 1.0);
        if !capped {
            let vals_max: Vec<f64> = sweep
                .points
                .par_iter()
                .map(|p| self.delta_value(alpha, p, e_max))
                .collect::<Result<_>>()?;
            out.zeros_max = self.find_zeros(alpha, e_max, sweep, &vals_max);
            for zp in &out.zeros_max {
                out.fits_max.push(self.order_fit(alpha, e_max, &zp.point, delta)?);
            }
            out.positivity_max = outside_extreme(sweep, &vals_max, &out.zeros_max, delta, -1.0);
        }
        Ok(out)
    }

    /// `[min, max]` of a root function over the sweep, refined around the
    /// extremal sweep points.
    fn refine_hull(&self, alpha: usize, sweep: &PSweep, roots: &[(usize, f64)], below: bool) -> Option<[f64; 2]> {
        if roots.is_empty() {
            return None;
        }
        let (imin, zmin) = roots.iter().copied().fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let (imax, zmax) = roots
            .iter()
            .copied()
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let root_at = |x: &[f64]| -> Option<f64> {
            let p = [x[0], x[1], x[2]];
            if below {
                self.below_or(alpha, &p)
            } else {
                let (_, big) = self.fibre_bounds(&p);
                let mut notes = Vec::new();
                self.roots_above(alpha, &p, big, &mut notes)
                    .ok()
                    .and_then(|r| r.first().map(|r| r.z))
            }
        };
        let h = 0.5 * sweep.spacing();
        let (_, lo) = parabolic_minimize(|x| root_at(x).unwrap_or(f64::INFINITY), &sweep.points[imin], h, REFINE_SWEEPS);
        let (_, hi) = parabolic_minimize(
            |x| root_at(x).map(|z| -z).unwrap_or(f64::INFINITY),
            &sweep.points[imax],
            h,
            REFINE_SWEEPS,
        );
        Some([lo.min(zmin), (-hi).max(zmax)])
    }
}

fn outside_extreme(sweep: &PSweep, values: &[f64], zeros: &[ZeroPoint], radius: f64, sign: f64) -> Option<f64> {
    sweep
        .points
        .iter()
        .zip(values)
        .filter(|(p, _)| zeros.iter().all(|z| torus_distance(p, &z.point) >= radius))
        .map(|(_, v)| sign * v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
}

fn check_alpha(alpha: usize) -> Result<()> {
    if alpha == 1 || alpha == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must be 1 or 2, got {alpha}")))
    }
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, x)| if x < a.1 { (i, x) } else { a })
}

/// The 26 unit directions of the cubic neighbourhood.
fn directions() -> Vec<Point> {
    let mut out = Vec::new();
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if a == 0 && b == 0 && c == 0 {
                    continue;
                }
                let n = ((a * a + b * b + c * c) as f64).sqrt();
                out.push([a as f64 / n, b as f64 / n, c as f64 / n]);
            }
        }
    }
    out
}

/// Least-squares line `y = a x + b`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}
