//! Small dense optimizers used by the variational integrator: a Nelder–Mead
//! simplex for the nonsmooth trace-norm objective and a Gauss–Newton
//! least-squares solver used to warm-start it.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex along each coordinate.
    pub initial_step: f64,
    /// Stop when every vertex lies within this distance of the best vertex.
    pub xtol: f64,
    /// Stop when the spread of objective values over the simplex falls below this.
    pub ftol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { initial_step: 1e-3, xtol: 1e-9, ftol: 1e-12, max_evals: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with the adaptive-coefficient Nelder–Mead simplex
/// (reflection 1, expansion 1 + 2/n, contraction 3/4 - 1/(2n), shrink 1 - 1/n).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n > 1 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    if n == 0 {
        return NelderMeadResult { x: x0.to_vec(), f: f0, evals, iterations: 0, converged: true };
    }
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let spread = simplex[n].1 - best.1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter <= opts.xtol || spread <= opts.ftol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / nf).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(alpha * gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best_x.iter().zip(&vertex.0).map(|(b, v)| b + delta * (v - b)).collect();
            let fx = eval(&x, &mut evals);
            *vertex = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult { x, f: fx, evals, iterations, converged }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonOptions {
    pub max_iters: usize,
    /// Central-difference step for the Jacobian.
    pub fd_step: f64,
    /// Stop once the residual norm drops below this.
    pub rtol: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { max_iters: 6, fd_step: 1e-6, rtol: 1e-15 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonResult {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub evals: usize,
}

/// Gauss–Newton minimization of `|r(x)|²` with a central-difference Jacobian
/// and step halving when the residual would grow.
pub fn gauss_newton<R: FnMut(&[f64]) -> Vec<f64>>(mut r: R, x0: &[f64], opts: &GaussNewtonOptions) -> GaussNewtonResult {
    let n = x0.len();
    let mut evals = 1;
    let mut x = x0.to_vec();
    let mut res = DVector::from_vec(r(&x));
    let mut norm = res.norm();
    for _ in 0..opts.max_iters {
        if norm <= opts.rtol || n == 0 {
            break;
        }
        let m = res.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += opts.fd_step;
            xm[j] -= opts.fd_step;
            let rp = r(&xp);
            let rm = r(&xm);
            evals += 2;
            for i in 0..m {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * opts.fd_step);
            }
        }
        let svd = jac.svd(true, true);
        let Ok(step) = svd.solve(&(-&res), 1e-12 * svd.singular_values.max()) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let tres = DVector::from_vec(r(&trial));
            evals += 1;
            let tnorm = tres.norm();
            if tnorm < norm {
                x = trial;
                res = tres;
                let gain = norm - tnorm;
                norm = tnorm;
                improved = gain > 1e-3 * norm || norm <= opts.rtol;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    GaussNewtonResult { x, residual_norm: norm, evals }
}
