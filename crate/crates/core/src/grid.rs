//! Uniform tensor grids on the three-torus and the symmetric pair space.
//!
//! Nodes live in the fundamental cube `(-L/2, L/2]^3` with `L = 2π` for the
//! base torus and `L = 4π` for the double cover. Every node carries the same
//! quadrature weight; in double-cover mode the weight is divided by eight so a
//! 2π-periodic integrand integrates to its base-torus value.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub const PI3: Point = [PI, PI, PI];
pub const ORIGIN: Point = [0.0, 0.0, 0.0];

/// `(2π)^3`, the total mass of the torus.
pub fn torus_volume() -> f64 {
    (2.0 * PI).powi(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Base,
    DoubleCover,
}

impl GridMode {
    pub fn period(self) -> f64 {
        match self {
            GridMode::Base => 2.0 * PI,
            GridMode::DoubleCover => 4.0 * PI,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" => Ok(GridMode::Base),
            "double" | "double_cover" | "double-cover" => Ok(GridMode::DoubleCover),
            other => Err(Error::InvalidArgument(format!(
                "unknown grid mode `{other}` (expected base or double)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TorusGrid {
    n_per_axis: usize,
    mode: GridMode,
    offset: bool,
    axis: Vec<f64>,
    nodes: Vec<Point>,
    weight: f64,
}

/// Outcome of checking that `s ↦ s + 2π̄` permutes the nodes.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftCheck {
    pub exact: bool,
    /// Largest distance (in units of the grid spacing) between a shifted node
    /// and the node it is mapped to.
    pub max_mismatch: f64,
    pub permutation: Vec<usize>,
}

impl TorusGrid {
    /// Builds a uniform grid with `n_per_axis` nodes along each axis.
    ///
    /// The base torus accepts any `n_per_axis >= 2`. The double cover needs an
    /// even count so that the half-period shift maps nodes onto nodes.
    pub fn new(n_per_axis: usize, mode: GridMode, offset: bool) -> Result<Self> {
        if n_per_axis < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_per_axis must be at least 2, got {n_per_axis}"
            )));
        }
        if mode == GridMode::DoubleCover && n_per_axis % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "double-cover grids need an even n_per_axis (shift closure), got {n_per_axis}"
            )));
        }
        let period = mode.period();
        let h = period / n_per_axis as f64;
        let shift = if offset { 0.5 } else { 1.0 };
        let axis: Vec<f64> = (0..n_per_axis)
            .map(|k| -0.5 * period + (k as f64 + shift) * h)
            .collect();
        let mut nodes = Vec::with_capacity(n_per_axis.pow(3));
        for &x in &axis {
            for &y in &axis {
                for &z in &axis {
                    nodes.push([x, y, z]);
                }
            }
        }
        let weight = match mode {
            GridMode::Base => h.powi(3),
            GridMode::DoubleCover => h.powi(3) / 8.0,
        };
        Ok(Self {
            n_per_axis,
            mode,
            offset,
            axis,
            nodes,
            weight,
        })
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn offset(&self) -> bool {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// Uniform per-node quadrature weight.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn spacing(&self) -> f64 {
        self.mode.period() / self.n_per_axis as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_per_axis + j) * self.n_per_axis + k
    }

    /// Same mode and offset, `factor` times the resolution.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.n_per_axis * factor, self.mode, self.offset)
    }

    /// Quadrature `weight · Σ samples`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                self.len(),
                samples.len()
            )));
        }
        let mut acc = 0.0;
        for (i, &v) in samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NumericDomain(format!(
                    "non-finite sample {v} at node {i} {:?}",
                    self.nodes[i]
                )));
            }
            acc += v;
        }
        Ok(acc * self.weight)
    }

    pub fn integrate_fn<F: Fn(&Point) -> f64>(&self, f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (i, p) in self.nodes.iter().enumerate() {
            let v = f(p);
            if !v.is_finite() {
                return Err(Error::NumericDomain(format!(
                    "non-finite integrand {v} at node {i} {p:?}"
                )));
            }
            acc += v;
        }
        Ok(acc * self.weight)
    }

    /// Index of the node nearest to `p` modulo the grid period, together with
    /// the distance to it.
    pub fn nearest_node(&self, p: &Point) -> (usize, f64) {
        let period = self.mode.period();
        let h = self.spacing();
        let shift = if self.offset { 0.5 } else { 1.0 };
        let n = self.n_per_axis as i64;
        let mut idx = [0usize; 3];
        let mut d2 = 0.0;
        for a in 0..3 {
            let t = (p[a] + 0.5 * period) / h - shift;
            let k = t.round() as i64;
            let k = k.rem_euclid(n) as usize;
            idx[a] = k;
            let diff = wrap(p[a] - self.axis[k], period);
            d2 += diff * diff;
        }
        (self.index(idx[0], idx[1], idx[2]), d2.sqrt())
    }

    /// Whether some node coincides with `p` (modulo the period).
    pub fn has_node_at(&self, p: &Point) -> bool {
        self.nearest_node(p).1 < 1e-12 * self.mode.period()
    }

    /// Node permutation induced by `s ↦ s + 2π̄`.
    pub fn shift_permutation(&self) -> Result<Vec<usize>> {
        if self.mode != GridMode::DoubleCover {
            return Err(Error::UnsupportedMode(
                "the shift s -> s + 2pi is the identity on the base torus".into(),
            ));
        }
        let n = self.n_per_axis;
        let half = n / 2;
        let mut perm = vec![0; self.len()];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    perm[self.index(i, j, k)] =
                        self.index((i + half) % n, (j + half) % n, (k + half) % n);
                }
            }
        }
        Ok(perm)
    }

    pub fn shift_involution_check(&self) -> Result<ShiftCheck> {
        let perm = self.shift_permutation()?;
        let period = self.mode.period();
        let h = self.spacing();
        let mut max_mismatch: f64 = 0.0;
        let mut involution = true;
        for (i, &j) in perm.iter().enumerate() {
            let a = self.nodes[i];
            let b = self.nodes[j];
            for c in 0..3 {
                let d = wrap(a[c] + 2.0 * PI - b[c], period).abs() / h;
                max_mismatch = max_mismatch.max(d);
            }
            if perm[j] != i {
                involution = false;
            }
        }
        Ok(ShiftCheck {
            exact: involution && max_mismatch < 1e-9,
            max_mismatch,
            permutation: perm,
        })
    }
}

/// Wraps `x` into `(-period/2, period/2]`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let mut y = x.rem_euclid(period);
    if y > 0.5 * period {
        y -= period;
    }
    y
}

/// Euclidean distance between two torus points, measured on the base torus.
pub fn torus_distance(a: &Point, b: &Point) -> f64 {
    let mut d2 = 0.0;
    for c in 0..3 {
        let d = wrap(a[c] - b[c], 2.0 * PI);
        d2 += d * d;
    }
    d2.sqrt()
}

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// A quadrature result with an optional error estimate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: Option<f64>,
}

/// Exponents of the leading error terms of the offset trapezoid rule for an
/// integrand with an inverse-square point singularity in three dimensions.
pub const RICHARDSON_ORDERS: [i32; 2] = [1, 3];

/// Extrapolates values computed at resolutions `n, 2n, 4n, ...`.
///
/// Returns the extrapolated value and the difference to the previous
/// extrapolation stage as an error estimate.
pub fn richardson_extrapolate(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], f64::NAN),
        _ => {
            let mut table = values.to_vec();
            let mut previous = table[table.len() - 1];
            for &order in RICHARDSON_ORDERS.iter() {
                if table.len() < 2 {
                    break;
                }
                let f = 2f64.powi(order);
                previous = table[table.len() - 1];
                table = table.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
            }
            let best = table[table.len() - 1];
            (best, (best - previous).abs())
        }
    }
}

/// A plain or Richardson-refined quadrature rule built on a torus grid.
#[derive(Clone, Debug)]
pub struct Quadrature {
    levels: Vec<TorusGrid>,
}

impl Quadrature {
    pub fn plain(grid: TorusGrid) -> Self {
        Self { levels: vec![grid] }
    }

    /// Three-level `(n, 2n, 4n)` Richardson rule on offset grids.
    pub fn richardson(grid: TorusGrid) -> Result<Self> {
        Self::richardson_levels(grid, 3)
    }

    pub fn richardson_levels(grid: TorusGrid, levels: usize) -> Result<Self> {
        if !grid.offset() {
            return Err(Error::InvalidArgument(
                "Richardson refinement needs an offset grid".into(),
            ));
        }
        if !(2..=3).contains(&levels) {
            return Err(Error::InvalidArgument(format!(
                "Richardson levels must be 2 or 3, got {levels}"
            )));
        }
        let mut out = vec![grid];
        for _ in 1..levels {
            let next = out[out.len() - 1].refined(2)?;
            out.push(next);
        }
        Ok(Self { levels: out })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.levels[0]
    }

    pub fn levels(&self) -> &[TorusGrid] {
        &self.levels
    }

    pub fn is_refined(&self) -> bool {
        self.levels.len() > 1
    }

    pub fn integrate_fn<F: Fn(&Point) -> f64>(&self, f: F) -> Result<Estimate> {
        let values = self
            .levels
            .iter()
            .map(|g| g.integrate_fn(&f))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.combine(&values))
    }

    /// Combines per-level integrals into an estimate.
    pub fn combine(&self, values: &[f64]) -> Estimate {
        if values.len() == 1 {
            Estimate {
                value: values[0],
                error: None,
            }
        } else {
            let (value, error) = richardson_extrapolate(values);
            Estimate {
                value,
                error: Some(error),
            }
        }
    }
}

/// Index of the symmetric pair space: all node pairs `(i, j)` with `i <= j`.
///
/// A symmetric function `f` on node pairs is embedded as the vector
/// `x_{ij} = c_{ij} · w · f(i, j)` with `c = 1` on the diagonal and `√2`
/// off it, which makes the Euclidean norm of `x` equal the double quadrature
/// of `|f|^2`.
#[derive(Clone, Debug)]
pub struct SymPairIndex {
    n_nodes: usize,
    pairs: Vec<(u32, u32)>,
}

impl SymPairIndex {
    pub fn new(n_nodes: usize) -> Self {
        let mut pairs = Vec::with_capacity(n_nodes * (n_nodes + 1) / 2);
        for i in 0..n_nodes {
            for j in i..n_nodes {
                pairs.push((i as u32, j as u32));
            }
        }
        Self { n_nodes, pairs }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.pairs[k];
        (i as usize, j as usize)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(i, j)| (i as usize, j as usize))
    }

    /// Position of the unordered pair `{i, j}`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * self.n_nodes - a * a.saturating_sub(1) / 2 + (b - a)
    }

    pub fn multiplicity(&self, k: usize) -> f64 {
        let (i, j) = self.pairs[k];
        if i == j {
            1.0
        } else {
            std::f64::consts::SQRT_2
        }
    }

    /// Embeds a symmetric table `f[i * N + j]` as a weighted pair vector.
    pub fn embed(&self, weight: f64, table: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_nodes;
        if table.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected a {n}x{n} table, got {} entries",
                table.len()
            )));
        }
        let scale = table.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = (0.0, 0, 0);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (table[i * n + j] - table[j * n + i]).abs() / scale;
                if d > worst.0 {
                    worst = (d, i, j);
                }
            }
        }
        if worst.0 > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "table is not symmetric: relative defect {:e} at pair ({}, {})",
                worst.0, worst.1, worst.2
            )));
        }
        Ok(self
            .pairs
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| {
                let (i, j) = (i as usize, j as usize);
                self.multiplicity(k) * weight * 0.5 * (table[i * n + j] + table[j * n + i])
            })
            .collect())
    }

    /// Inverse of [`embed`](Self::embed): returns the full symmetric table.
    pub fn project(&self, weight: f64, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected a pair vector of length {}, got {}",
                self.len(),
                vector.len()
            )));
        }
        let n = self.n_nodes;
        let mut table = vec![0.0; n * n];
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let (i, j) = (i as usize, j as usize);
            let v = vector[k] / (self.multiplicity(k) * weight);
            table[i * n + j] = v;
            table[j * n + i] = v;
        }
        Ok(table)
    }
}
