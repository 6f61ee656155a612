//! Small derivative-free local optimizers.

/// Coordinate-wise parabolic refinement of a local minimum.
///
/// Starting at `x0` with step `h`, each sweep fits a parabola through
/// `f(x - h e_i), f(x), f(x + h e_i)` along every coordinate and moves to its
/// vertex (clamped to one step). The step halves after every sweep.
pub fn parabolic_minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], h: f64, sweeps: usize) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut step = h;
    for _ in 0..sweeps {
        for i in 0..x.len() {
            let mut xm = x.clone();
            xm[i] -= step;
            let mut xp = x.clone();
            xp[i] += step;
            let fm = f(&xm);
            let fp = f(&xp);
            let curv = fm - 2.0 * fx + fp;
            let mut t = if curv > 0.0 {
                0.5 * (fm - fp) / curv
            } else if fm < fp {
                -1.0
            } else {
                1.0
            };
            t = t.clamp(-1.0, 1.0);
            let mut cand = x.clone();
            cand[i] += t * step;
            let fc = f(&cand);
            let (best_x, best_f) = [(cand, fc), (xm, fm), (xp, fp)]
                .into_iter()
                .fold((x.clone(), fx), |acc, (cx, cf)| if cf < acc.1 { (cx, cf) } else { acc });
            x = best_x;
            fx = best_f;
        }
        step *= 0.5;
    }
    (x, fx)
}

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            max_evals: 2000,
            x_tol: 1e-10,
            f_tol: 1e-14,
        }
    }
}

/// Standard Nelder–Mead simplex search.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < opts.x_tol || (simplex[n].1 - simplex[0].1).abs() < opts.f_tol {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&entry.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let fx = f(&x);
                    *entry = (x, fx);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + 3.0;
        let (x, fx) = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5);
        assert!((fx - 3.0).abs() < 1e-10);
    }

    #[test]
    fn parabolic_refines_cosine_well() {
        let f = |x: &[f64]| -(x[0] - 0.3).cos() - (x[1] + 0.2).cos();
        let (x, _) = parabolic_minimize(f, &[0.0, 0.0], 0.4, 40);
        assert!((x[0] - 0.3).abs() < 1e-6 && (x[1] + 0.2).abs() < 1e-6);
    }
}
