//! Dense and iterative symmetric eigensolvers.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// A real symmetric linear map given by its action.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

/// Builds the dense matrix column by column from the operator action.
pub fn materialize<A: SymmetricOperator + ?Sized>(op: &A) -> Mat<f64> {
    let n = op.dim();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply_vec(&e)
        })
        .collect();
    Mat::from_fn(n, n, |i, j| cols[j][i])
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Set when fewer than the requested number lie below the cutoff.
    pub truncated: bool,
    pub iterations: usize,
}

/// All eigenpairs of a dense symmetric matrix, ascending.
pub fn dense_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericDomain(format!("dense eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let values = order.iter().map(|&i| s[i]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((values, vectors))
}

/// Lowest eigenpairs of a dense matrix below `cutoff`, at most `k` of them.
pub fn dense_lowest<A: SymmetricOperator + ?Sized>(op: &A, k: usize, cutoff: f64) -> Result<EigenPairs> {
    let a = materialize(op);
    let (values, vecs) = dense_eigen(&a)?;
    let below: Vec<usize> = (0..values.len()).filter(|&i| values[i] < cutoff).take(k).collect();
    let vectors: Vec<Vec<f64>> = below
        .iter()
        .map(|&j| (0..vecs.nrows()).map(|i| vecs[(i, j)]).collect())
        .collect();
    let residuals = vectors
        .iter()
        .zip(&below)
        .map(|(v, &j)| residual(op, values[j], v))
        .collect();
    Ok(EigenPairs {
        truncated: below.len() < k,
        values: below.iter().map(|&j| values[j]).collect(),
        vectors,
        residuals,
        converged: true,
        iterations: 0,
    })
}

/// `‖(A - λ)v‖ / ‖v‖`.
pub fn residual<A: SymmetricOperator + ?Sized>(op: &A, lambda: f64, v: &[f64]) -> f64 {
    let av = op.apply_vec(v);
    let r: f64 = av.iter().zip(v).map(|(a, x)| (a - lambda * x).powi(2)).sum();
    (r / dot(v, v)).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Clone, Debug)]
pub struct KrylovOptions {
    pub block: usize,
    pub max_basis: usize,
    pub max_restarts: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            block: 8,
            max_basis: 160,
            max_restarts: 400,
            tol: 1e-10,
            seed: 7,
        }
    }
}

/// Orthogonalizes `v` against `basis` twice (classical Gram–Schmidt) and
/// normalizes it. Returns `false` if the vector is numerically dependent.
fn orthonormalize(basis: &[Vec<f64>], extra: &[Vec<f64>], v: &mut [f64]) -> bool {
    let before = dot(v, v).sqrt();
    for _ in 0..2 {
        for set in [basis, extra] {
            let coeffs: Vec<f64> = set.par_iter().map(|q| dot(q, v)).collect();
            for (q, c) in set.iter().zip(coeffs) {
                axpy(-c, q, v);
            }
        }
    }
    let after = dot(v, v).sqrt();
    if !(after > 1e-10 * before.max(f64::MIN_POSITIVE)) || after == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= after);
    true
}

/// Lowest `k` eigenpairs below `cutoff` by a restarted block Krylov
/// (block Davidson without preconditioning) iteration with full
/// reorthogonalization and Rayleigh–Ritz on the projected matrix.
pub fn krylov_lowest<A: SymmetricOperator + ?Sized>(
    op: &A,
    k: usize,
    cutoff: f64,
    opts: &KrylovOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    if k == 0 || n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
            converged: true,
            truncated: k > 0,
            iterations: 0,
        });
    }
    let k = k.min(n);
    let block = opts.block.max(1).min(n);
    let cap = opts.max_basis.max(k + 2 * block).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() - 0.5).collect() };

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut aq: Vec<Vec<f64>> = Vec::with_capacity(cap);
    // Projected matrix QᵀAQ, grown column by column.
    let mut proj: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut pending: Vec<Vec<f64>> = (0..block.max(k.min(cap / 2))).map(|_| random_vec(&mut rng)).collect();
    let mut iterations = 0;
    let mut last = (vec![], vec![], vec![]);
    let mut scale: f64 = 1.0;
    while iterations < opts.max_restarts {
        iterations += 1;
        let mut added = Vec::new();
        for mut v in pending.drain(..) {
            if q.len() + added.len() >= cap {
                break;
            }
            if orthonormalize(&q, &added, &mut v) {
                added.push(v);
            }
        }
        if added.is_empty() {
            if q.len() >= n {
                break;
            }
            let mut v = random_vec(&mut rng);
            if !orthonormalize(&q, &[], &mut v) {
                break;
            }
            added.push(v);
        }
        let new_aq: Vec<Vec<f64>> = added.par_iter().map(|v| op.apply_vec(v)).collect();
        let start = q.len();
        q.extend(added);
        aq.extend(new_aq);
        for j in start..q.len() {
            let col: Vec<f64> = (0..=j).into_par_iter().map(|i| dot(&q[i], &aq[j])).collect();
            proj.push(col);
        }

        // Rayleigh–Ritz.
        let m = q.len();
        let t = Mat::<f64>::from_fn(m, m, |i, j| if i <= j { proj[j][i] } else { proj[i][j] });
        let (theta, y) = dense_eigen(&t)?;
        scale = scale.max(theta.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        let want = k.min(m);
        let ritz = |j: usize, src: &[Vec<f64>]| -> Vec<f64> {
            let mut x = vec![0.0; n];
            for (i, s) in src.iter().enumerate() {
                axpy(y[(i, j)], s, &mut x);
            }
            x
        };
        let keep = (want + block).min(m);
        let xs: Vec<Vec<f64>> = (0..keep).into_par_iter().map(|j| ritz(j, &q)).collect();
        let axs: Vec<Vec<f64>> = (0..keep).into_par_iter().map(|j| ritz(j, &aq)).collect();
        let res_vecs: Vec<Vec<f64>> = (0..want)
            .map(|j| axs[j].iter().zip(&xs[j]).map(|(a, x)| a - theta[j] * x).collect())
            .collect();
        let res: Vec<f64> = res_vecs.iter().map(|r| dot(r, r).sqrt()).collect();
        let tol = opts.tol * scale.max(1.0);
        // Converged once every wanted pair below the cutoff is accurate and
        // the first pair above the cutoff (if any) is also settled.
        let mut done = want == k;
        for j in 0..want {
            if res[j] > tol {
                done = false;
            }
            if theta[j] >= cutoff {
                break;
            }
        }
        last = (theta[..want].to_vec(), xs[..want].to_vec(), res.clone());
        if done || m >= n {
            return Ok(finish(last, k, cutoff, true, iterations));
        }
        // Next block: residuals of the lowest unconverged pairs.
        pending = (0..want)
            .filter(|&j| res[j] > tol)
            .take(block)
            .map(|j| res_vecs[j].clone())
            .collect();
        if q.len() + pending.len() > cap {
            q = xs;
            aq = axs;
            // Re-orthonormalize the kept Ritz basis against rounding drift.
            let mut qq: Vec<Vec<f64>> = Vec::with_capacity(cap);
            let mut aqq: Vec<Vec<f64>> = Vec::with_capacity(cap);
            for (x, ax) in q.into_iter().zip(aq) {
                let nx = dot(&x, &x).sqrt();
                qq.push(x.iter().map(|v| v / nx).collect());
                aqq.push(ax.iter().map(|v| v / nx).collect());
            }
            q = qq;
            aq = aqq;
            proj = (0..q.len())
                .map(|j| (0..=j).map(|i| dot(&q[i], &aq[j])).collect())
                .collect();
        }
    }
    Ok(finish(last, k, cutoff, false, iterations))
}

fn finish(
    (theta, xs, res): (Vec<f64>, Vec<Vec<f64>>, Vec<f64>),
    k: usize,
    cutoff: f64,
    converged: bool,
    iterations: usize,
) -> EigenPairs {
    let below: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] < cutoff).collect();
    EigenPairs {
        truncated: below.len() < k,
        values: below.iter().map(|&j| theta[j]).collect(),
        vectors: below.iter().map(|&j| xs[j].clone()).collect(),
        residuals: below.iter().map(|&j| res[j]).collect(),
        converged,
        iterations,
    }
}

/// Dense threshold for `lowest_eigenpairs`.
pub const DENSE_LIMIT: usize = 3000;

/// Lowest eigenpairs: dense below `DENSE_LIMIT`, iterative above.
pub fn lowest_eigenpairs<A: SymmetricOperator + ?Sized>(op: &A, k: usize, cutoff: f64, seed: u64) -> Result<EigenPairs> {
    if op.dim() <= DENSE_LIMIT {
        dense_lowest(op, k, cutoff)
    } else {
        krylov_lowest(
            op,
            k,
            cutoff,
            &KrylovOptions {
                seed,
                max_basis: if op.dim() > 200_000 { 96 } else { 160 },
                ..KrylovOptions::default()
            },
        )
    }
}

/// Largest singular value of a general real matrix given by its action and
/// the action of its transpose, by Lanczos on `AᵀA`.
pub fn spectral_norm<F, G>(dim_in: usize, apply: F, apply_t: G, seed: u64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if dim_in == 0 {
        return 0.0;
    }
    let steps = dim_in.min(60);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim_in).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![];
    let mut alpha = vec![];
    let mut beta: Vec<f64> = vec![];
    for _ in 0..steps {
        let mut w = apply_t(&apply(&v));
        let a = dot(&w, &v);
        alpha.push(a);
        axpy(-a, &v, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-beta[beta.len() - 1], prev, &mut w);
        }
        basis.push(v.clone());
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let b = dot(&w, &w).sqrt();
        if b <= 1e-14 * a.abs().max(1e-300) {
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    let m = alpha.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    match dense_eigen(&t) {
        Ok((ev, _)) => ev.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}

/// Singular values of a dense matrix, descending.
pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(vec![]);
    }
    let mut s = a
        .singular_values()
        .map_err(|e| Error::NumericDomain(format!("SVD failed: {e:?}")))?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}
