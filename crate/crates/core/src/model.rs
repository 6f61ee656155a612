//! Model data: dispersions, form factors and the explicit lattice example.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, torus_distance, wrap, GridMode, Point, Quadrature, TorusGrid, ORIGIN, PI3};
use crate::optimize::parabolic_minimize;

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type PairFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;

/// Lattice dispersion `ε(p) = Σ (1 - cos p_i)`.
pub fn eps(p: &Point) -> f64 {
    (1.0 - p[0].cos()) + (1.0 - p[1].cos()) + (1.0 - p[2].cos())
}

/// The sextuple `(w0, w1, v0, v1, v2, w2)` together with the minimum point of
/// `w2` and optional closed forms used to speed up or sharpen evaluations.
#[derive(Clone)]
pub struct ModelFunctions {
    pub w0: f64,
    pub w1: ScalarFn,
    pub v0: ScalarFn,
    pub v1: ScalarFn,
    pub v2: ScalarFn,
    pub w2: PairFn,
    pub p0: Point,
    /// When present, `w2(p, q) = e(p) + e(q)`.
    pub separable: Option<ScalarFn>,
    /// Closed forms of `m(p) = min_q w2(p, q)` and `M(p) = max_q w2(p, q)`.
    pub fibre_extrema: Option<(ScalarFn, ScalarFn)>,
    /// Closed form of `(m, M)`.
    pub extrema: Option<(f64, f64)>,
    /// Index of the form factor that is orthogonal to 2π̄-periodic functions.
    pub orthogonal_factor: Option<usize>,
    pub params: Option<ExampleParams>,
}

impl fmt::Debug for ModelFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelFunctions")
            .field("w0", &self.w0)
            .field("p0", &self.p0)
            .field("separable", &self.separable.is_some())
            .field("extrema", &self.extrema)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

impl ModelFunctions {
    pub fn new(w0: f64, w1: ScalarFn, v0: ScalarFn, v1: ScalarFn, v2: ScalarFn, w2: PairFn, p0: Point) -> Self {
        Self {
            w0,
            w1,
            v0,
            v1,
            v2,
            w2,
            p0,
            separable: None,
            fibre_extrema: None,
            extrema: None,
            orthogonal_factor: None,
            params: None,
        }
    }

    /// A model with `w2(p, q) = e(p) + e(q)`.
    pub fn separable(w0: f64, w1: ScalarFn, v0: ScalarFn, v1: ScalarFn, v2: ScalarFn, e: ScalarFn, p0: Point) -> Self {
        let e2 = e.clone();
        let w2: PairFn = Arc::new(move |p, q| e2(p) + e2(q));
        let mut m = Self::new(w0, w1, v0, v1, v2, w2, p0);
        m.separable = Some(e);
        m
    }

    /// Constant-dispersion model without couplings, handy for sanity checks.
    pub fn constant_w2(w0: f64, w1: f64, w2: f64) -> Self {
        let mut m = Self::new(
            w0,
            constant(w1),
            constant(0.0),
            constant(0.0),
            constant(0.0),
            Arc::new(move |_, _| w2),
            ORIGIN,
        );
        m.fibre_extrema = Some((constant(w2), constant(w2)));
        m.extrema = Some((w2, w2));
        m
    }

    /// Builds a model from per-node samples; evaluation off the grid uses the
    /// nearest node.
    pub fn tabulated(
        grid: &TorusGrid,
        w0: f64,
        w1: Vec<f64>,
        v0: Vec<f64>,
        v1: Vec<f64>,
        v2: Vec<f64>,
        w2: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        for (name, len) in [("w1", w1.len()), ("v0", v0.len()), ("v1", v1.len()), ("v2", v2.len())] {
            if len != n {
                return Err(Error::InvalidArgument(format!("{name}: expected {n} samples, got {len}")));
            }
        }
        if w2.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "w2: expected {} samples, got {}",
                n * n,
                w2.len()
            )));
        }
        if let Some((i, v)) = w1
            .iter()
            .chain(&v0)
            .chain(&v1)
            .chain(&v2)
            .chain(&w2)
            .enumerate()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NumericDomain(format!("non-finite tabulated value {v} at entry {i}")));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (w2[i * n + j] - w2[j * n + i]).abs() > 1e-13 * (1.0 + w2[i * n + j].abs()) {
                    return Err(Error::InvalidArgument(format!("w2 table is not symmetric at ({i}, {j})")));
                }
            }
        }
        let (amin, _) = w2
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
        let p0 = grid.node(amin / n);
        let lo = w2.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = Arc::new(grid.clone());
        let lookup = |vals: Vec<f64>| -> ScalarFn {
            let g = g.clone();
            Arc::new(move |p| vals[g.nearest_node(p).0])
        };
        let g2 = g.clone();
        let w2f: PairFn = Arc::new(move |p, q| w2[g2.nearest_node(p).0 * n + g2.nearest_node(q).0]);
        let mut m = Self::new(w0, lookup(w1), lookup(v0), lookup(v1), lookup(v2), w2f, p0);
        m.extrema = Some((lo, hi));
        Ok(m)
    }

    pub fn form_factor(&self, alpha: usize) -> &ScalarFn {
        match alpha {
            0 => &self.v0,
            1 => &self.v1,
            _ => &self.v2,
        }
    }

    /// `(m(p), M(p))`, from closed forms when available, otherwise sampled over
    /// `nodes`.
    pub fn fibre_bounds(&self, p: &Point, nodes: &[Point]) -> (f64, f64) {
        if let Some((lo, hi)) = &self.fibre_extrema {
            return (lo(p), hi(p));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for q in nodes {
            let v = (self.w2)(p, q);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// `(m, M)`, from closed forms when available, otherwise via
    /// [`min_max_w2`] on `grid`.
    pub fn bounds(&self, grid: &TorusGrid) -> (f64, f64) {
        match self.extrema {
            Some(b) => b,
            None => {
                let ext = min_max_w2(self, grid);
                (ext.m, ext.big_m)
            }
        }
    }
}

/// `max(1, |m|, |M|)`, the scale for absolute tolerances.
pub fn scale_of(m: f64, big_m: f64) -> f64 {
    1f64.max(m.abs()).max(big_m.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleParams {
    pub mu1: f64,
    pub mu2: f64,
    pub c: [f64; 3],
    pub d: [f64; 3],
    pub w0: f64,
    pub v0_amplitude: f64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        Self {
            mu1: 1e-3,
            mu2: 1e-3,
            c: [1.0; 3],
            d: [1.0; 3],
            w0: 1.0,
            v0_amplitude: 0.0,
        }
    }
}

impl ExampleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, mu) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {mu}")));
            }
        }
        let all = self.c.iter().chain(&self.d).chain([&self.w0, &self.v0_amplitude]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("example parameters must be finite".into()));
        }
        Ok(())
    }

    /// Unscaled form factor `v̂_α`.
    pub fn hat(&self, alpha: usize) -> ScalarFn {
        match alpha {
            1 => {
                let c = self.c;
                Arc::new(move |p: &Point| c[0] * p[0].cos() + c[1] * p[1].cos() + c[2] * p[2].cos())
            }
            _ => {
                let d = self.d;
                Arc::new(move |p: &Point| {
                    d[0] * (0.5 * p[0]).cos() + d[1] * (0.5 * p[1]).cos() + d[2] * (0.5 * p[2]).cos()
                })
            }
        }
    }

    pub fn mu(&self, alpha: usize) -> f64 {
        if alpha == 1 {
            self.mu1
        } else {
            self.mu2
        }
    }

    pub fn with_mu(&self, alpha: usize, mu: f64) -> Self {
        let mut p = self.clone();
        if alpha == 1 {
            p.mu1 = mu;
        } else {
            p.mu2 = mu;
        }
        p
    }
}

/// The explicit family `w1 ≡ 1`, `v_α = √(2^{2-α} μ_α) v̂_α`,
/// `w2(p, q) = ε(p) + ε(q)`, `p0 = 0̄`, with `v0 = a Σ cos p_i`.
pub fn example_family(params: &ExampleParams) -> Result<ModelFunctions> {
    params.validate()?;
    let a = params.v0_amplitude;
    let v0: ScalarFn = Arc::new(move |p: &Point| a * (p[0].cos() + p[1].cos() + p[2].cos()));
    let k1 = (2.0 * params.mu1).sqrt();
    let k2 = params.mu2.sqrt();
    let h1 = params.hat(1);
    let h2 = params.hat(2);
    let v1: ScalarFn = Arc::new(move |p| k1 * h1(p));
    let v2: ScalarFn = Arc::new(move |p| k2 * h2(p));
    let mut m = ModelFunctions::separable(params.w0, constant(1.0), v0, v1, v2, Arc::new(eps), ORIGIN);
    m.fibre_extrema = Some((Arc::new(eps), Arc::new(|p: &Point| eps(p) + 6.0)));
    m.extrema = Some((0.0, 12.0));
    m.orthogonal_factor = Some(2);
    m.params = Some(params.clone());
    Ok(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct W2Extrema {
    pub m: f64,
    pub big_m: f64,
    pub argmin: (Point, Point),
    pub argmax: (Point, Point),
}

/// Minimum and maximum of `w2` over node pairs, refined by local quadratic
/// fits around the best pairs.
pub fn min_max_w2(model: &ModelFunctions, grid: &TorusGrid) -> W2Extrema {
    let nodes = grid.nodes();
    let n = nodes.len();
    let (imin, vmin, imax, vmax) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (i * n, f64::INFINITY, i * n, f64::NEG_INFINITY);
            for j in 0..n {
                let v = (model.w2)(&nodes[i], &nodes[j]);
                if v < best.1 {
                    best.0 = i * n + j;
                    best.1 = v;
                }
                if v > best.3 {
                    best.2 = i * n + j;
                    best.3 = v;
                }
            }
            best
        })
        .reduce(
            || (0, f64::INFINITY, 0, f64::NEG_INFINITY),
            |a, b| {
                let lo = if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { (b.0, b.1) } else { (a.0, a.1) };
                let hi = if b.3 > a.3 || (b.3 == a.3 && b.2 < a.2) { (b.2, b.3) } else { (a.2, a.3) };
                (lo.0, lo.1, hi.0, hi.1)
            },
        );
    let h = grid.spacing();
    let refine = |k: usize, sign: f64| -> (Point, Point, f64) {
        let (p, q) = (nodes[k / n], nodes[k % n]);
        let x0 = [p[0], p[1], p[2], q[0], q[1], q[2]];
        let f = |x: &[f64]| sign * (model.w2)(&[x[0], x[1], x[2]], &[x[3], x[4], x[5]]);
        let (x, fx) = parabolic_minimize(f, &x0, h, 40);
        (
            [x[0], x[1], x[2]],
            [x[3], x[4], x[5]],
            sign * fx,
        )
    };
    let (p, q, lo) = refine(imin, 1.0);
    let (pp, qq, hi) = refine(imax, -1.0);
    W2Extrema {
        m: lo.min(vmin),
        big_m: hi.max(vmax),
        argmin: (p, q),
        argmax: (pp, qq),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MuThresholds {
    pub alpha: usize,
    pub mu0: f64,
    pub mu1: f64,
    pub mu0_error: Option<f64>,
    pub mu1_error: Option<f64>,
}

/// `μ^(0) = (∫ v̂²/ε)^{-1}` and `μ^(1) = (∫ v̂²/(6+ε))^{-1}`, Richardson-refined
/// on offset grids.
pub fn mu_thresholds(params: &ExampleParams, alpha: usize, grid: &TorusGrid) -> Result<MuThresholds> {
    let singular: Vec<Point> = match grid.mode() {
        GridMode::Base => vec![ORIGIN],
        GridMode::DoubleCover => {
            let t = 2.0 * std::f64::consts::PI;
            let mut v = Vec::new();
            for a in [0.0, t] {
                for b in [0.0, t] {
                    for c in [0.0, t] {
                        v.push([a, b, c]);
                    }
                }
            }
            v
        }
    };
    if let Some(p) = singular.iter().find(|p| grid.has_node_at(p)) {
        return Err(Error::SingularNode(format!(
            "grid has a node at {p:?} where eps vanishes; use an offset grid"
        )));
    }
    let quad = if grid.offset() {
        Quadrature::richardson(grid.clone())?
    } else {
        Quadrature::plain(grid.clone())
    };
    let hat = params.hat(alpha);
    let i0 = quad.integrate_fn(|s| hat(s).powi(2) / eps(s))?;
    let i1 = quad.integrate_fn(|s| hat(s).powi(2) / (6.0 + eps(s)))?;
    if !(i0.value > 0.0 && i1.value > 0.0) {
        return Err(Error::NumericDomain(format!(
            "form factor v_{alpha} vanishes identically; thresholds are infinite"
        )));
    }
    let rel = |e: Option<f64>, v: f64| e.map(|e| e / v / v);
    Ok(MuThresholds {
        alpha,
        mu0: 1.0 / i0.value,
        mu1: 1.0 / i1.value,
        mu0_error: rel(i0.error, i0.value),
        mu1_error: rel(i1.error, i1.value),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "MIXED")]
    Mixed,
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "AMBIGUOUS")]
    Ambiguous,
}

impl Regime {
    /// Case label describing the shape of `(-∞, M] ∩ σ_ess(H_α)`.
    pub fn case_label(self) -> &'static str {
        match self {
            Regime::Pos => "i",
            Regime::Mixed => "ii",
            Regime::Neg => "iii",
            Regime::Ambiguous => "ambiguous",
        }
    }

    /// Branch below `m` is non-empty.
    pub fn has_branch(self) -> bool {
        matches!(self, Regime::Mixed | Regime::Neg)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Pos => "POS",
            Regime::Mixed => "MIXED",
            Regime::Neg => "NEG",
            Regime::Ambiguous => "AMBIGUOUS",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeClass {
    pub alpha: usize,
    pub regime: Regime,
    pub min_value: f64,
    pub max_value: f64,
    pub argmin: Point,
    pub argmax: Point,
    pub tolerance: f64,
}

impl RegimeClass {
    pub fn from_extrema(alpha: usize, min: (f64, Point), max: (f64, Point), tolerance: f64) -> Self {
        let regime = if min.0.abs() <= tolerance || max.0.abs() <= tolerance {
            Regime::Ambiguous
        } else if min.0 > 0.0 {
            Regime::Pos
        } else if max.0 < 0.0 {
            Regime::Neg
        } else {
            Regime::Mixed
        };
        Self {
            alpha,
            regime,
            min_value: min.0,
            max_value: max.0,
            argmin: min.1,
            argmax: max.1,
            tolerance,
        }
    }
}

/// Samples of `cos(k·s)` on the grid nodes.
pub fn harmonic_samples(grid: &TorusGrid, k: [i32; 3]) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|s| (k[0] as f64 * s[0] + k[1] as f64 * s[1] + k[2] as f64 * s[2]).cos())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct OrthogonalityReport {
    pub beta: usize,
    pub mode: GridMode,
    /// `|∫ v_β g|` per test function.
    pub values: Vec<f64>,
    pub max_abs: f64,
    /// `max |∫ v_β g| / (‖v_β‖ ‖g‖)`.
    pub max_relative: f64,
}

/// Evaluates `∫ v_β g ds` for each supplied 2π̄-periodic test function.
pub fn check_orthogonality(model: &ModelFunctions, grid: &TorusGrid, tests: &[Vec<f64>]) -> Result<OrthogonalityReport> {
    let beta = model.orthogonal_factor.unwrap_or(2);
    let v = model.form_factor(beta);
    let vs: Vec<f64> = grid.nodes().iter().map(|s| v(s)).collect();
    let vnorm = grid.integrate(&vs.iter().map(|x| x * x).collect::<Vec<_>>())?.sqrt();
    let mut values = Vec::with_capacity(tests.len());
    let mut max_relative: f64 = 0.0;
    for g in tests {
        let prod: Vec<f64> = vs.iter().zip(g).map(|(a, b)| a * b).collect();
        let val = grid.integrate(&prod)?.abs();
        let gnorm = grid.integrate(&g.iter().map(|x| x * x).collect::<Vec<_>>())?.sqrt();
        let denom = vnorm * gnorm;
        if denom > 0.0 {
            max_relative = max_relative.max(val / denom);
        }
        values.push(val);
    }
    let max_abs = values.iter().copied().fold(0.0, f64::max);
    Ok(OrthogonalityReport {
        beta,
        mode: grid.mode(),
        values,
        max_abs,
        max_relative,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct QuadraticBounds {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `∂²w2/∂p∂p` at `(p0, p0)`.
    pub w1: [[f64; 3]; 3],
    /// `∂²w2/∂p∂q` at `(p0, p0)`.
    pub w2: [[f64; 3]; 3],
    pub hessian_min_eigenvalue: f64,
    pub sampled_pairs: usize,
    pub verified: bool,
}

impl QuadraticBounds {
    /// Upper bound for `1 / (w2(p, q) - m)` implied by the fitted constants.
    pub fn inverse_gap_bound(&self, p: &Point, q: &Point, p0: &Point) -> f64 {
        let rp = torus_distance(p, p0);
        let rq = torus_distance(q, p0);
        if rp < self.delta && rq < self.delta {
            (1.0 / (self.c1 * (rp * rp + rq * rq))).max(1.0 / self.c3)
        } else {
            1.0 / self.c3
        }
    }
}

pub const HESSIAN_STEP: f64 = 1e-4 * std::f64::consts::PI;

/// Central-difference Hessian of a function of `dim` variables.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x0.len();
    let f0 = f(x0);
    let mut out = vec![vec![0.0; n]; n];
    let shifted = |i: usize, a: f64, j: usize, b: f64| {
        let mut x = x0.to_vec();
        x[i] += a;
        x[j] += b;
        f(&x)
    };
    for i in 0..n {
        let fp = shifted(i, h, i, 0.0);
        let fm = shifted(i, -h, i, 0.0);
        out[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            let v = (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) + shifted(i, -h, j, -h))
                / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Eigenvalues of a small symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let m = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[i][j] + a[j][i]));
    let mut ev = m
        .self_adjoint_eigenvalues(Side::Lower)
        .unwrap_or_else(|_| vec![f64::NAN; n]);
    ev.sort_by(f64::total_cmp);
    ev
}

/// Fits the two-sided quadratic bounds of `w2 - m` near `(p0, p0)` and the
/// gap `C3` away from it, and checks that the Hessian there is positive
/// definite.
pub fn quadratic_bounds_check(model: &ModelFunctions, grid: &TorusGrid, delta: f64) -> Result<QuadraticBounds> {
    if !(delta > 0.0 && delta < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, pi), got {delta}")));
    }
    let p0 = model.p0;
    let (m, big_m) = model.bounds(grid);
    let x0 = [p0[0], p0[1], p0[2], p0[0], p0[1], p0[2]];
    let hess = hessian(
        |x| (model.w2)(&[x[0], x[1], x[2]], &[x[3], x[4], x[5]]),
        &x0,
        HESSIAN_STEP,
    );
    let ev = symmetric_eigenvalues(&hess);
    let min_ev = ev[0];
    let scale = scale_of(m, big_m);
    if !(min_ev > 1e-6 * scale) {
        return Err(Error::DegenerateMinimum(min_ev));
    }
    let mut w1 = [[0.0; 3]; 3];
    let mut w2 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            w1[i][j] = hess[i][j];
            w2[i][j] = hess[i][j + 3];
        }
    }
    // Local samples: a 9^3 lattice scaled into the ball of radius delta.
    let k = 4i32;
    let mut local: Vec<Point> = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            for c in -k..=k {
                let u = [a as f64 / k as f64, b as f64 / k as f64, c as f64 / k as f64];
                let r = norm(&u);
                if r <= 1.0 + 1e-12 {
                    let scale_r = if r > 0.0 { 0.999 } else { 0.0 };
                    local.push([
                        p0[0] + delta * scale_r * u[0],
                        p0[1] + delta * scale_r * u[1],
                        p0[2] + delta * scale_r * u[2],
                    ]);
                }
            }
        }
    }
    let (c1, c2) = local
        .par_iter()
        .map(|p| {
            let rp = torus_distance(p, &p0).powi(2);
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for q in &local {
                let r2 = rp + torus_distance(q, &p0).powi(2);
                if r2 == 0.0 {
                    continue;
                }
                let ratio = ((model.w2)(p, q) - m) / r2;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            (lo, hi)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let nodes = grid.nodes();
    let c3 = nodes
        .par_iter()
        .map(|p| {
            let inside_p = torus_distance(p, &p0) < delta;
            let mut lo = f64::INFINITY;
            for q in nodes {
                if inside_p && torus_distance(q, &p0) < delta {
                    continue;
                }
                lo = lo.min((model.w2)(p, q) - m);
            }
            lo
        })
        .reduce(|| f64::INFINITY, f64::min);
    let sampled_pairs = local.len() * local.len() + nodes.len() * nodes.len();
    let verified = c1 > 0.0 && c1 <= c2 && c3 > 0.0 && c3.is_finite();
    Ok(QuadraticBounds {
        delta,
        c1,
        c2,
        c3,
        w1,
        w2,
        hessian_min_eigenvalue: min_ev,
        sampled_pairs,
        verified,
    })
}

/// Closed-lattice p-sweep on `[-π, π]^3` with `n` points per axis; includes
/// `0̄` for odd `n` and `π̄` always.
#[derive(Clone, Debug)]
pub struct PSweep {
    pub n_per_axis: usize,
    pub points: Vec<Point>,
}

impl PSweep {
    pub fn new(n_per_axis: usize) -> Result<Self> {
        if n_per_axis < 2 {
            return Err(Error::InvalidArgument(format!(
                "sweep needs at least 2 points per axis, got {n_per_axis}"
            )));
        }
        let pi = std::f64::consts::PI;
        let axis: Vec<f64> = (0..n_per_axis)
            .map(|k| -pi + 2.0 * pi * k as f64 / (n_per_axis - 1) as f64)
            .collect();
        let mut points = Vec::with_capacity(n_per_axis.pow(3));
        for &a in &axis {
            for &b in &axis {
                for &c in &axis {
                    points.push([a, b, c]);
                }
            }
        }
        Ok(Self { n_per_axis, points })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n_per_axis - 1) as f64
    }
}

/// Wraps a point into the base cube.
pub fn wrap_point(p: &Point) -> Point {
    let t = 2.0 * std::f64::consts::PI;
    [wrap(p[0], t), wrap(p[1], t), wrap(p[2], t)]
}

pub const PI_BAR: Point = PI3;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        let params = ExampleParams {
            mu1: 0.3,
            c: [1.0, 2.0, -0.5],
            ..Default::default()
        };
        let m = example_family(&params).unwrap();
        assert_eq!(eps(&ORIGIN), 0.0);
        assert!((eps(&PI_BAR) - 6.0).abs() < 1e-15);
        let expect = (2.0 * 0.3f64).sqrt() * 2.5;
        assert!(((m.v1)(&ORIGIN) - expect).abs() < 1e-14);
        assert_eq!(m.extrema, Some((0.0, 12.0)));
    }

    #[test]
    fn nonpositive_mu_rejected() {
        let params = ExampleParams {
            mu2: 0.0,
            ..Default::default()
        };
        assert!(matches!(example_family(&params), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn min_max_of_example_and_constant() {
        let grid = TorusGrid::new(6, GridMode::Base, true).unwrap();
        let mut m = example_family(&ExampleParams::default()).unwrap();
        m.extrema = None;
        let ext = min_max_w2(&m, &grid);
        assert!(ext.m.abs() < 1e-9, "m = {}", ext.m);
        assert!((ext.big_m - 12.0).abs() < 1e-9, "M = {}", ext.big_m);
        assert!(norm(&ext.argmin.0) < 1e-4);
        let c = ModelFunctions::constant_w2(0.0, 1.0, 5.0);
        let ext = min_max_w2(&c, &grid);
        assert_eq!((ext.m, ext.big_m), (5.0, 5.0));
    }

    #[test]
    fn quadratic_bounds_of_example() {
        let grid = TorusGrid::new(8, GridMode::Base, true).unwrap();
        let m = example_family(&ExampleParams::default()).unwrap();
        let qb = quadratic_bounds_check(&m, &grid, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((qb.w1[i][j] - id).abs() < 1e-6);
                assert!(qb.w2[i][j].abs() < 1e-6);
            }
        }
        // (1 - cos δ)/δ² at δ = 0.5 along an axis, 1/2 at the origin.
        assert!((qb.c1 - (1.0 - 0.4995f64.cos()) / 0.4995f64.powi(2)).abs() < 1e-3);
        assert!(qb.c2 <= 0.5 && qb.c2 > 0.499);
        assert!(qb.verified);
    }

    #[test]
    fn degenerate_minimum_detected() {
        let e: ScalarFn = Arc::new(|p: &Point| (1.0 - p[0].cos()) + (1.0 - p[1].cos()));
        let m = ModelFunctions::separable(0.0, constant(1.0), constant(0.0), constant(0.0), constant(0.0), e, ORIGIN);
        let grid = TorusGrid::new(4, GridMode::Base, true).unwrap();
        assert!(matches!(
            quadratic_bounds_check(&m, &grid, 0.5),
            Err(Error::DegenerateMinimum(_))
        ));
    }

    #[test]
    fn tabulated_matches_source_at_nodes() {
        let grid = TorusGrid::new(4, GridMode::Base, true).unwrap();
        let src = example_family(&ExampleParams::default()).unwrap();
        let s = |f: &ScalarFn| grid.nodes().iter().map(|p| f(p)).collect::<Vec<_>>();
        let mut w2 = Vec::new();
        for p in grid.nodes() {
            for q in grid.nodes() {
                w2.push((src.w2)(p, q));
            }
        }
        let t = ModelFunctions::tabulated(&grid, 1.0, s(&src.w1), s(&src.v0), s(&src.v1), s(&src.v2), w2).unwrap();
        for p in grid.nodes() {
            assert_eq!((t.v2)(p), (src.v2)(p));
            assert_eq!((t.w2)(p, &grid.node(3)), (src.w2)(p, &grid.node(3)));
        }
    }

    #[test]
    fn sweep_contains_origin_and_corner() {
        let s = PSweep::new(9).unwrap();
        assert_eq!(s.points.len(), 729);
        assert!(s.points.iter().any(|p| norm(p) < 1e-15));
        assert!(s.points.iter().any(|p| torus_distance(p, &PI_BAR) < 1e-15));
    }
}
