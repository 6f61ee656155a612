#![allow(dead_code)]

use std::f64::consts::PI;

use fockspec::model::{eps, mu_thresholds, MuThresholds};
use fockspec::{example_family, ExampleParams, GridMode, ModelFunctions, Point, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(2π)^{-3} ∫ 1/ε`, the simple-cubic lattice Green function at the band edge.
pub const WATSON: f64 = 0.505462019717326006052004;

pub fn torus_volume() -> f64 {
    (2.0 * PI).powi(3)
}

/// Stratified Monte-Carlo estimate of `∫_{[-π,π)^3} f(s)^2 / (shift + ε(s)) ds`
/// and its standard error, with `per` uniform samples in each of `k^3` cells.
/// For `shift = 0` the Coulomb-like part `2 f(0)^2 / |s|^2` inside the ball
/// of radius π is integrated exactly, which keeps the variance finite.
pub fn mc_integral(f: &dyn Fn(&Point) -> f64, shift: f64, k: usize, per: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = f(&[0.0; 3]).powi(2);
    let singular = shift == 0.0;
    let h = 2.0 * PI / k as f64;
    let cells = (k * k * k) as f64;
    let (mut total, mut var) = (0.0, 0.0);
    for c in 0..k * k * k {
        let lo = [(c / (k * k)) as f64, ((c / k) % k) as f64, (c % k) as f64].map(|i| -PI + i * h);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..per {
            let s: Point = [0, 1, 2].map(|i| lo[i] + h * rng.random::<f64>());
            let mut v = f(&s).powi(2) / (shift + eps(&s));
            if singular {
                let r2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
                if r2 < PI * PI {
                    v -= 2.0 * f0 / r2;
                }
            }
            sum += v;
            sum2 += v * v;
        }
        let n = per as f64;
        let mean = sum / n;
        total += mean;
        var += (sum2 / n - mean * mean).max(0.0) * n / (n - 1.0) / n;
    }
    let vol = torus_volume();
    let mut value = vol * total / cells;
    if singular {
        value += 8.0 * PI * PI * f0;
    }
    (value, vol * var.sqrt() / cells)
}

pub fn thresholds(mode: GridMode) -> [MuThresholds; 2] {
    let grid = TorusGrid::new(16, mode, true).unwrap();
    let p = ExampleParams::default();
    [
        mu_thresholds(&p, 1, &grid).unwrap(),
        mu_thresholds(&p, 2, &grid).unwrap(),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    /// Half the lower threshold.
    Pos,
    /// Midway between the thresholds.
    Mixed,
    /// Twice the upper threshold.
    Neg,
}

pub fn mu_at(t: &MuThresholds, level: Level) -> f64 {
    match level {
        Level::Pos => 0.5 * t.mu0,
        Level::Mixed => 0.5 * (t.mu0 + t.mu1),
        Level::Neg => 2.0 * t.mu1,
    }
}

pub fn params_at(th: &[MuThresholds; 2], l1: Level, l2: Level) -> ExampleParams {
    ExampleParams {
        mu1: mu_at(&th[0], l1),
        mu2: mu_at(&th[1], l2),
        ..ExampleParams::default()
    }
}

pub fn model_at(th: &[MuThresholds; 2], l1: Level, l2: Level) -> ModelFunctions {
    example_family(&params_at(th, l1, l2)).unwrap()
}
