//! The Weinberg operator `W(z)` on `ℂ ⊕ nodes ⊕ symmetric pairs`, its sign
//! functions `ξ_α(z)`, fixed-point residuals and compactness probes.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{self, KrylovOptions, SymmetricOperator};
use crate::error::{Error, Result};
use crate::friedrichs::{BranchData, FriedrichsFamily, OrderFit, ZeroPoint};
use crate::grid::{torus_distance, Point, SymPairIndex, TorusGrid};
use crate::model::{ModelFunctions, QuadraticBounds, Regime};
use crate::spectrum::{FockState, SigmaSet};

/// Dense assembly refuses more symmetric pairs than this.
pub const WEINBERG_PAIR_CAP: usize = 5_000;

pub const BLOCK_NAMES: [[&str; 3]; 3] = [["W00", "W01", "W02"], ["W10", "W11", "W12"], ["W20", "W21", "W22"]];

/// `(ξ1(z), ξ2(z))`, the common sign of `Δ_α(·; z)` over the grid nodes.
pub fn xi(fam: &FriedrichsFamily, z: f64) -> Result<(f64, f64)> {
    if z > fam.m() {
        return Err(Error::Domain(format!("z = {z} exceeds m = {}", fam.m())));
    }
    let mut out = [0.0; 2];
    for alpha in 1..=2 {
        let d = fam.delta_at_nodes(alpha, z)?;
        let pos = d.iter().all(|&v| v > 0.0);
        let neg = d.iter().all(|&v| v < 0.0);
        out[alpha - 1] = match (pos, neg) {
            (true, _) => 1.0,
            (_, true) => -1.0,
            _ => return Err(Error::ForbiddenRegion { alpha, z }),
        };
    }
    Ok((out[0], out[1]))
}

#[derive(Clone)]
pub struct WeinbergOperator {
    pub z: f64,
    pub xi: (f64, f64),
    grid: TorusGrid,
    pairs: SymPairIndex,
    w0: f64,
    v0: Vec<f64>,
    v1: Vec<f64>,
    v2: Vec<f64>,
    /// `1 / (w2(p, s) - z)`, row-major.
    g: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    matrix: Mat<f64>,
}

/// Assembles `W(z)` with `Δ_α` taken from `fam` at the nodes of its grid.
pub fn assemble_w(fam: &FriedrichsFamily, z: f64) -> Result<WeinbergOperator> {
    let model = fam.model();
    let grid = fam.grid().clone();
    let n = grid.len();
    let pairs = SymPairIndex::new(n);
    if pairs.len() > WEINBERG_PAIR_CAP {
        return Err(Error::Resource(format!(
            "{} symmetric pairs exceed the dense cap {WEINBERG_PAIR_CAP}",
            pairs.len()
        )));
    }
    let signs = xi(fam, z)?;
    let mut r = [Vec::new(), Vec::new()];
    for alpha in 1..=2 {
        let s = if alpha == 1 { signs.0 } else { signs.1 };
        let d = fam.delta_at_nodes(alpha, z)?;
        for (node, &v) in d.iter().enumerate() {
            if s * v <= 0.0 {
                return Err(Error::SqrtDomain { alpha, node, value: s * v });
            }
        }
        r[alpha - 1] = d.iter().map(|v| (s * v).sqrt()).collect();
    }
    let nodes = fam.grid().nodes();
    let sample = |f: &crate::model::ScalarFn| -> Vec<f64> { nodes.iter().map(|q| f(q)).collect() };
    let g: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let den = (model.w2)(&nodes[k / n], &nodes[k % n]) - z;
            if den > 0.0 {
                Ok(1.0 / den)
            } else {
                Err(Error::InconsistentThreshold {
                    node: k / n,
                    denominator: den,
                    m_p: z,
                })
            }
        })
        .collect::<Result<_>>()?;
    let [r1, r2] = r;
    let mut op = WeinbergOperator {
        z,
        xi: signs,
        grid,
        pairs,
        w0: model.w0,
        v0: sample(&model.v0),
        v1: sample(&model.v1),
        v2: sample(&model.v2),
        g,
        r1,
        r2,
        matrix: Mat::zeros(0, 0),
    };
    op.matrix = op.build_dense();
    Ok(op)
}

/// `W(z)` on the plain grid quadrature, the discretization consistent with
/// the discretized `H`.
pub fn assemble_w_plain(model: &ModelFunctions, grid: &TorusGrid, z: f64) -> Result<WeinbergOperator> {
    let fam = FriedrichsFamily::plain(model, grid)?;
    assemble_w(&fam, z)
}

impl WeinbergOperator {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        1 + self.grid.len() + self.pairs.len()
    }

    /// Block sizes `(1, N, P)`.
    pub fn layout(&self) -> [usize; 3] {
        [1, self.grid.len(), self.pairs.len()]
    }

    fn offsets(&self) -> [usize; 4] {
        let [a, b, c] = self.layout();
        [0, a, a + b, a + b + c]
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    /// Copy of block `W_ij`.
    pub fn block(&self, i: usize, j: usize) -> Mat<f64> {
        let o = self.offsets();
        let (r0, r1) = (o[i], o[i + 1]);
        let (c0, c1) = (o[j], o[j + 1]);
        Mat::from_fn(r1 - r0, c1 - c0, |a, b| self.matrix[(r0 + a, c0 + b)])
    }

    pub fn sqrt_factors(&self) -> (&[f64], &[f64]) {
        (&self.r1, &self.r2)
    }

    fn w(&self) -> f64 {
        self.grid.weight()
    }

    fn c(a: usize, b: usize) -> f64 {
        if a == b {
            1.0
        } else {
            std::f64::consts::SQRT_2
        }
    }

    pub fn encode(&self, s: &FockState) -> Vec<f64> {
        let n = self.grid.len();
        let w = self.w();
        let mut x = Vec::with_capacity(self.dim());
        x.push(s.f0);
        x.extend(s.f1.iter().map(|v| w.sqrt() * v));
        for (a, b) in self.pairs.pairs() {
            x.push(Self::c(a, b) * w * s.f2[a * n + b]);
        }
        x
    }

    pub fn decode(&self, x: &[f64]) -> FockState {
        let n = self.grid.len();
        let w = self.w();
        let f1 = x[1..1 + n].iter().map(|v| v / w.sqrt()).collect();
        let mut f2 = vec![0.0; n * n];
        for (k, (a, b)) in self.pairs.pairs().enumerate() {
            let v = x[1 + n + k] / (Self::c(a, b) * w);
            f2[a * n + b] = v;
            f2[b * n + a] = v;
        }
        FockState { f0: x[0], f1, f2 }
    }

    /// `p ↦ ∫ k(p, s) u(s) ds` for a kernel given as `G(p, s) · u(s)`.
    fn g_apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let w = self.w();
        (0..n)
            .map(|p| w * self.g[p * n..(p + 1) * n].iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn w10(&self, g0: f64) -> Vec<f64> {
        let (xi1, _) = self.xi;
        (0..self.grid.len()).map(|p| -xi1 * self.v0[p] * g0 / self.r1[p]).collect()
    }

    fn w11(&self, g1: &[f64]) -> Vec<f64> {
        let (xi1, _) = self.xi;
        let u: Vec<f64> = (0..g1.len()).map(|s| self.v1[s] * g1[s] / self.r1[s]).collect();
        let k = self.g_apply(&u);
        (0..g1.len()).map(|p| xi1 * self.v1[p] / (2.0 * self.r1[p]) * k[p]).collect()
    }

    fn w12(&self, g2bar: &[f64]) -> Vec<f64> {
        let (xi1, _) = self.xi;
        let u: Vec<f64> = (0..g2bar.len()).map(|s| self.v1[s] * g2bar[s] / self.r2[s]).collect();
        let k = self.g_apply(&u);
        (0..g2bar.len()).map(|p| -xi1 * self.v2[p] / self.r1[p] * k[p]).collect()
    }

    /// `-[v1(p) a(q) + v1(q) a(p)] G(p, q) / 2`.
    fn compose(&self, a: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        for p in 0..n {
            for q in 0..n {
                out[p * n + q] -= 0.5 * (self.v1[p] * a[q] + self.v1[q] * a[p]) * self.g[p * n + q];
            }
        }
    }

    /// Applies the block formulas to a state in function form.
    pub fn apply_state(&self, s: &FockState) -> FockState {
        let n = self.grid.len();
        let w = self.w();
        let (_, xi2) = self.xi;
        let g2bar: Vec<f64> = (0..n)
            .map(|a| w * s.f2[a * n..(a + 1) * n].iter().zip(&self.v2).map(|(x, y)| x * y).sum::<f64>())
            .collect();

        let f0 = (1.0 + self.z - self.w0) * s.f0
            - w * (0..n).map(|t| self.v0[t] * s.f1[t] / self.r1[t]).sum::<f64>();

        let a = self.w10(s.f0);
        let b = self.w11(&s.f1);
        let c = self.w12(&g2bar);
        let f1: Vec<f64> = (0..n).map(|p| a[p] + b[p] + c[p]).collect();

        let mut f2 = vec![0.0; n * n];
        self.compose(&a, &mut f2);
        let bb = self.g_apply(&(0..n).map(|t| self.v2[t] * s.f1[t] / self.r1[t]).collect::<Vec<_>>());
        let cc = self.g_apply(&(0..n).map(|t| self.v2[t] * g2bar[t] / self.r2[t]).collect::<Vec<_>>());
        for p in 0..n {
            for q in 0..n {
                let gpq = self.g[p * n + q];
                let t21 = -xi2 * gpq / 2.0
                    * (self.v1[p] * self.v2[q] * bb[p] / self.r2[p] + self.v1[q] * self.v2[p] * bb[q] / self.r2[q]);
                let t22 = xi2 * self.v2[p] * self.v2[q] * gpq * (cc[p] / self.r2[p] + cc[q] / self.r2[q]);
                f2[p * n + q] += t21 + t22;
            }
        }
        self.compose(&b, &mut f2);
        self.compose(&c, &mut f2);
        FockState { f0, f1, f2 }
    }

    fn build_dense(&self) -> Mat<f64> {
        let d = self.dim();
        let cols: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                self.encode(&self.apply_state(&self.decode(&e)))
            })
            .collect();
        let mut m = Mat::zeros(d, d);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.matrix, x, false)
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.matrix, x, true)
    }

    /// Reduced system of the proof for `(f0, φ1, ψ)` with `φ1 = r1 f1` and
    /// `ψ = r2 f̄2`. Returns the image of the three components.
    pub fn reduced_apply(&self, f0: f64, phi1: &[f64], psi: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.grid.len();
        let w = self.w();
        let (xi1, xi2) = self.xi;
        let h0 = (1.0 + self.z - self.w0) * f0 - w * (0..n).map(|t| self.v0[t] * phi1[t] / self.r1[t]).sum::<f64>();
        let a = self.w10(f0);
        let b = self.w11(phi1);
        let k12 = self.g_apply(&(0..n).map(|s| self.v1[s] * psi[s] / self.r2[s]).collect::<Vec<_>>());
        let h1 = (0..n).map(|p| a[p] + b[p] - xi1 * self.v2[p] / self.r1[p] * k12[p]).collect();
        let k21 = self.g_apply(&(0..n).map(|s| self.v2[s] * phi1[s] / self.r1[s]).collect::<Vec<_>>());
        let k22 = self.g_apply(&(0..n).map(|s| self.v2[s] * psi[s] / self.r2[s]).collect::<Vec<_>>());
        let h2 = (0..n)
            .map(|p| -xi2 * self.v1[p] / (2.0 * self.r2[p]) * k21[p] + xi2 * self.v2[p] / self.r2[p] * k22[p])
            .collect();
        (h0, h1, h2)
    }
}

fn mat_vec(m: &Mat<f64>, x: &[f64], transpose: bool) -> Vec<f64> {
    let x = faer::ColRef::from_slice(x);
    let y = if transpose { m.transpose() * x } else { m * x };
    y.iter().copied().collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateResidual {
    pub name: String,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub z: f64,
    pub candidates: Vec<CandidateResidual>,
    pub best: String,
    pub best_residual: f64,
}

/// `‖W(z) g − g‖ / ‖g‖` for the natural identifications `g` of an
/// eigenvector `f` of the discretized `H` at `z`:
///
/// * `literal`: `(f0, f1, f2)`
/// * `rescaled`: `(f0, r1 f1, f2)`
/// * `rescaled_pair`: `(f0, r1 f1, F2)` with `F2` rebuilt from
///   `φ1 = r1 f1`, `ψ = r2 f̄2` through the pair-component identity
/// * `reduced`: the three-equation system for `(f0, φ1, ψ)`
///
/// Here `r_α = √(ξ_α Δ_α)` and `f̄2 = ∫ v2(s) f2(·, s) ds`.
pub fn fixed_point_residual(w: &WeinbergOperator, f: &FockState) -> FixedPointReport {
    let n = w.grid.len();
    let wt = w.w();
    let fbar: Vec<f64> = (0..n)
        .map(|a| wt * f.f2[a * n..(a + 1) * n].iter().zip(&w.v2).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    let phi1: Vec<f64> = (0..n).map(|p| w.r1[p] * f.f1[p]).collect();
    let psi: Vec<f64> = (0..n).map(|p| w.r2[p] * fbar[p]).collect();
    let mut big_f2 = vec![0.0; n * n];
    for p in 0..n {
        for q in 0..n {
            let g = w.g[p * n + q];
            big_f2[p * n + q] = (w.v2[q] * psi[p] + w.v2[p] * psi[q]) * g - 0.5 * (w.v1[q] * phi1[p] + w.v1[p] * phi1[q]) * g;
        }
    }
    let rel = |g: &FockState| -> f64 {
        let x = w.encode(g);
        let y = w.apply(&x);
        let num: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        (num / den).sqrt()
    };
    let mut candidates = vec![
        CandidateResidual {
            name: "literal".into(),
            residual: rel(f),
        },
        CandidateResidual {
            name: "rescaled".into(),
            residual: rel(&FockState {
                f0: f.f0,
                f1: phi1.clone(),
                f2: f.f2.clone(),
            }),
        },
        CandidateResidual {
            name: "rescaled_pair".into(),
            residual: rel(&FockState {
                f0: f.f0,
                f1: phi1.clone(),
                f2: big_f2,
            }),
        },
    ];
    let (h0, h1, h2) = w.reduced_apply(f.f0, &phi1, &psi);
    let sq = |v: &[f64]| wt * v.iter().map(|a| a * a).sum::<f64>();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let num = (h0 - f.f0).powi(2) + sq(&diff(&h1, &phi1)) + sq(&diff(&h2, &psi));
    let den = f.f0 * f.f0 + sq(&phi1) + sq(&psi);
    candidates.push(CandidateResidual {
        name: "reduced".into(),
        residual: (num / den).sqrt(),
    });
    for c in &mut candidates {
        if !c.residual.is_finite() {
            c.residual = f64::INFINITY;
        }
    }
    let best = candidates
        .iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .cloned()
        .unwrap();
    FixedPointReport {
        z: w.z,
        candidates,
        best: best.name,
        best_residual: best.residual,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockNorm {
    pub block: String,
    pub hs_norm: f64,
    /// Singular values above `1e-12` times the largest.
    pub rank: usize,
}

/// Hilbert–Schmidt norm of each block, which in orthonormal coordinates is
/// the Frobenius norm of the block matrix.
pub fn hs_norm(w: &WeinbergOperator) -> Result<Vec<BlockNorm>> {
    let mut out = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            let b = w.block(i, j);
            let hs = b.norm_l2();
            let rank = if b.nrows().min(b.ncols()) <= 1 {
                let sv = eigen::singular_values(&b)?;
                let top = sv.first().copied().unwrap_or(0.0);
                sv.iter().filter(|&&s| top > 0.0 && s > 1e-12 * top).count()
            } else {
                0
            };
            out.push(BlockNorm {
                block: BLOCK_NAMES[i][j].to_string(),
                hs_norm: hs,
                rank,
            });
        }
    }
    Ok(out)
}

struct NegGram<'a>(&'a WeinbergOperator);

impl SymmetricOperator for NegGram<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let t = self.0.apply_transpose(&self.0.apply(x));
        for (a, b) in y.iter_mut().zip(t) {
            *a = -b;
        }
    }
}

/// Largest `count` singular values of `W(z)`, in decreasing order.
pub fn singular_decay(w: &WeinbergOperator, count: usize) -> Result<Vec<f64>> {
    if w.dim() <= 800 {
        let mut sv = eigen::singular_values(&w.matrix)?;
        sv.truncate(count);
        return Ok(sv);
    }
    let opts = KrylovOptions {
        tol: 1e-9,
        ..KrylovOptions::default()
    };
    let pairs = eigen::krylov_lowest(&NegGram(w), count, 0.0, &opts)?;
    Ok(pairs.values.iter().map(|v| (-v).max(0.0).sqrt()).collect())
}

/// `‖A − B‖` by Lanczos on the Gram operator of the difference.
pub fn operator_distance(a: &WeinbergOperator, b: &WeinbergOperator, seed: u64) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument("operators live on different grids".into()));
    }
    let diff = &a.matrix - &b.matrix;
    Ok(eigen::spectral_norm(
        a.dim(),
        |x| mat_vec(&diff, x, false),
        |x| mat_vec(&diff, x, true),
        seed,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityTable {
    pub z: Vec<f64>,
    /// `distance[i][j] = ‖W(z_i) − W(z_j)‖`.
    pub distance: Vec<Vec<f64>>,
}

/// Pairwise operator-norm differences over a list of `z` in `Σ`.
pub fn continuity_modulus(fam: &FriedrichsFamily, sigma: &SigmaSet, zs: &[f64], seed: u64) -> Result<ContinuityTable> {
    let tol = 1e-12 * fam.scale();
    for &z in zs {
        if !sigma.intervals.iter().any(|iv| z >= iv[0] - tol && z <= iv[1] + tol) {
            return Err(Error::Domain(format!("z = {z} is outside Σ")));
        }
    }
    let ops: Vec<WeinbergOperator> = zs.iter().map(|&z| assemble_w(fam, z)).collect::<Result<_>>()?;
    let k = zs.len();
    let mut distance = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let v = operator_distance(&ops[i], &ops[j], seed)?;
            distance[i][j] = v;
            distance[j][i] = v;
        }
    }
    Ok(ContinuityTable {
        z: zs.to_vec(),
        distance,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeApproach {
    pub edge: f64,
    pub z: Vec<f64>,
    /// `‖W(z_k) − W(edge)‖`.
    pub distance: Vec<f64>,
    pub decreasing: bool,
}

/// `‖W(z_k) − W(edge)‖` along `z_k = edge + side · 2^{-k}`.
pub fn edge_approach(fam: &FriedrichsFamily, edge: f64, side: f64, ks: &[i32], seed: u64) -> Result<EdgeApproach> {
    let w_edge = assemble_w(fam, edge)?;
    let mut z = Vec::new();
    let mut distance = Vec::new();
    for &k in ks {
        let zk = edge + side * 2f64.powi(-k);
        let wk = assemble_w(fam, zk)?;
        z.push(zk);
        distance.push(operator_distance(&wk, &w_edge, seed)?);
    }
    let decreasing = distance.windows(2).all(|p| p[1] < p[0]);
    Ok(EdgeApproach {
        edge,
        z,
        distance,
        decreasing,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CompactnessReport {
    pub z: f64,
    pub xi: (f64, f64),
    pub blocks: Vec<BlockNorm>,
    /// Largest singular values at the two resolutions.
    pub singular_values: Vec<Vec<f64>>,
    pub resolutions: Vec<usize>,
    pub continuity: Vec<EdgeApproach>,
}

impl CompactnessReport {
    pub fn singular_values_sorted(&self) -> bool {
        self.singular_values
            .iter()
            .all(|s| s.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-10) + 1e-14))
    }

    pub fn hs_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.hs_norm.is_finite())
    }
}

/// HS norms at the finest grid, leading singular values at every grid, and
/// edge approaches `(edge, side)` on the finest grid.
pub fn compactness_report(
    model: &ModelFunctions,
    grids: &[TorusGrid],
    z: f64,
    edges: &[(f64, f64)],
    ks: &[i32],
    seed: u64,
) -> Result<CompactnessReport> {
    let finest = grids
        .last()
        .ok_or_else(|| Error::InvalidArgument("at least one grid is required".into()))?;
    let mut singular_values = Vec::with_capacity(grids.len());
    for g in grids {
        let w = assemble_w(&FriedrichsFamily::refined(model, g)?, z)?;
        singular_values.push(singular_decay(&w, 8)?);
    }
    let fam = FriedrichsFamily::refined(model, finest)?;
    let w = assemble_w(&fam, z)?;
    let continuity = edges
        .iter()
        .map(|&(edge, side)| edge_approach(&fam, edge, side, ks, seed))
        .collect::<Result<_>>()?;
    Ok(CompactnessReport {
        z,
        xi: w.xi,
        blocks: hs_norm(&w)?,
        singular_values,
        resolutions: grids.iter().map(|g| g.n_per_axis()).collect(),
        continuity,
    })
}

/// Lower bound `1/√|Δ_α(p; E)|` built from zero fits: `K (1 + Σ χ_δ |p − p*|^{-β/2})`.
#[derive(Clone, Debug, Serialize)]
pub struct RootMajorant {
    pub alpha: usize,
    pub k: f64,
    pub delta: f64,
    pub zeros: Vec<(Point, f64)>,
}

impl RootMajorant {
    pub fn eval(&self, p: &Point) -> f64 {
        let mut acc = 1.0;
        for (z, beta) in &self.zeros {
            let r = torus_distance(p, z);
            if r < self.delta {
                acc += r.powf(-beta / 2.0);
            }
        }
        self.k * acc
    }

    fn constant(alpha: usize, k: f64) -> Self {
        Self {
            alpha,
            k,
            delta: 0.0,
            zeros: vec![],
        }
    }

    /// Fits `K` so that `|Δ_α(p; e)| ≥ K^{-2}` outside the balls and
    /// `≥ K^{-2} |p − p*|^β` inside, over the fit samples and the grid nodes.
    fn from_zeros(fam: &FriedrichsFamily, alpha: usize, e: f64, zeros: &[ZeroPoint], fits: &[OrderFit], delta: f64) -> Result<Self> {
        let zs: Vec<(Point, f64)> = zeros
            .iter()
            .map(|zp| {
                let beta = fits
                    .iter()
                    .find(|f| torus_distance(&f.point, &zp.point) < 1e-6)
                    .map_or(2.0, |f| f.exponent);
                (zp.point, beta)
            })
            .collect();
        let vals = fam.delta_at_nodes(alpha, e)?;
        let mut c_min = f64::INFINITY;
        for (p, v) in fam.grid().nodes().iter().zip(&vals) {
            let mut ratio = v.abs();
            for (z, beta) in &zs {
                let r = torus_distance(p, z);
                if r < delta {
                    ratio = ratio.max(v.abs() / r.powf(*beta));
                }
            }
            c_min = c_min.min(ratio);
        }
        for f in fits {
            if f.constant > 0.0 {
                c_min = c_min.min(f.constant);
            }
        }
        if !(c_min > 0.0) {
            return Err(Error::NotApplicable(format!("Δ_{alpha} vanishes at a grid node at E = {e}")));
        }
        Ok(Self {
            alpha,
            k: c_min.powf(-0.5),
            delta,
            zeros: zs,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MajorantCheck {
    pub z: f64,
    /// `below_e_min`, `above_e_max` or `near_m`.
    pub window: String,
    pub holds: bool,
    pub worst_ratio: f64,
    pub samples: usize,
    pub majorants: Vec<RootMajorant>,
}

/// Checks that the `W22` kernel `|W(p, q, s, t; z)|` is dominated by the
/// product majorant built from `R_α ≥ 1/√|Δ_α|` and `Ḡ ≥ 1/(w2 − z)` on a
/// thinned sample of nodes.
pub fn kernel_majorant_check(
    fam: &FriedrichsFamily,
    branches: &[BranchData],
    bounds: &QuadraticBounds,
    z: f64,
    max_samples: usize,
) -> Result<MajorantCheck> {
    let m = fam.m();
    if z > m {
        return Err(Error::NotApplicable(format!("z = {z} exceeds m")));
    }
    let model = fam.model();
    let e_min = branches.iter().filter(|b| b.regime.has_branch()).filter_map(|b| b.e_min).fold(f64::INFINITY, f64::min);
    let e_max = branches
        .iter()
        .filter(|b| b.regime == Regime::Neg)
        .filter_map(|b| b.e_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let window = if !e_min.is_finite() {
        "no_branch"
    } else if z <= e_min {
        "below_e_min"
    } else if e_max.is_finite() && z >= e_max && z <= 0.5 * (m + e_max) {
        "above_e_max"
    } else if e_max.is_finite() && z >= e_max {
        "near_m"
    } else {
        return Err(Error::NotApplicable(format!("z = {z} lies in none of the three windows")));
    };
    let mut majorants = Vec::with_capacity(2);
    for alpha in 1..=2 {
        let b = branches
            .iter()
            .find(|b| b.alpha == alpha)
            .ok_or_else(|| Error::NotApplicable(format!("no branch data for alpha = {alpha}")))?;
        let maj = match b.regime {
            Regime::Pos => {
                let d = fam.delta_at_nodes(alpha, m)?;
                let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
                if !(lo > 0.0) {
                    return Err(Error::NotApplicable(format!("Δ_{alpha}(·; m) is not positive on the grid")));
                }
                RootMajorant::constant(alpha, lo.powf(-0.5))
            }
            _ if b.e_min.is_some_and(|e| z <= e) => {
                RootMajorant::from_zeros(fam, alpha, b.e_min.unwrap(), &b.zeros_min, &b.fits_min, b.delta)?
            }
            Regime::Neg if b.e_max.is_some_and(|e| z >= e) => {
                RootMajorant::from_zeros(fam, alpha, b.e_max.unwrap(), &b.zeros_max, &b.fits_max, b.delta)?
            }
            _ => {
                return Err(Error::NotApplicable(format!(
                    "{:?} regime for alpha = {alpha} lacks a bound at z = {z}",
                    b.regime
                )))
            }
        };
        majorants.push(maj);
    }
    let w = assemble_w(fam, z)?;
    let nodes = fam.grid().nodes();
    let n = nodes.len();
    let stride = n.div_ceil(max_samples.max(1)).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let (s1, s2) = (sup(&w.v1), sup(&w.v2));
    let gbar = |a: usize, b: usize| -> f64 {
        let gap = bounds.inverse_gap_bound(&nodes[a], &nodes[b], &model.p0);
        if z < m {
            gap.min(1.0 / (m - z))
        } else {
            gap
        }
    };
    let big_r1: Vec<f64> = nodes.iter().map(|p| majorants[0].eval(p)).collect();
    let big_r2: Vec<f64> = nodes.iter().map(|p| majorants[1].eval(p)).collect();
    let (xi1, xi2) = w.xi;
    let worst = idx
        .par_iter()
        .map(|&p| {
            let mut worst = 0.0f64;
            for &q in &idx {
                let gpq = w.g[p * n + q];
                for &s in &idx {
                    let (gps, gqs) = (w.g[p * n + s], w.g[q * n + s]);
                    let maj_base = gbar(p, q)
                        * big_r2[s]
                        * (s2.powi(4) * (gbar(p, s) * big_r2[p] + gbar(q, s) * big_r2[q])
                            + 0.5 * s1 * s1 * s2 * s2 * (gbar(q, s) * big_r1[q] + gbar(p, s) * big_r1[p]));
                    for &t in &idx {
                        let k = xi2 * w.v2[p] * w.v2[q] * w.v2[s] * w.v2[t] * gpq * (gps / w.r2[p] + gqs / w.r2[q]) / w.r2[s]
                            + xi1 * gpq * w.v1[s] * w.v2[t] / (2.0 * w.r2[s])
                                * (w.v1[p] * w.v2[q] * gqs / w.r1[q] + w.v1[q] * w.v2[p] * gps / w.r1[p]);
                        if k != 0.0 {
                            worst = worst.max(k.abs() / maj_base);
                        }
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(MajorantCheck {
        z,
        window: window.to_string(),
        holds: worst <= 1.0,
        worst_ratio: worst,
        samples: idx.len().pow(4),
        majorants,
    })
}
