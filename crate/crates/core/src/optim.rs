//! Quasi-Newton minimization and finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub max_iter: usize,
    /// Bound on the scaled gradient `max_i |g_i| max(|x_i|, 1) / max(|f|, 1)`.
    pub grad_tol: f64,
    /// Relative objective change regarded as a stall.
    pub f_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iter: 3000,
            grad_tol: 1e-7,
            f_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Scaled gradient norm used as the stopping rule.
pub fn scaled_gradient(x: &[f64], g: &[f64], f: f64) -> f64 {
    let fs = f.abs().max(1.0);
    x.iter()
        .zip(g)
        .map(|(xi, gi)| gi.abs() * xi.abs().max(1.0) / fs)
        .fold(0.0, f64::max)
}

/// BFGS with Armijo backtracking. `fg` returns the objective and its
/// gradient; an infinite or NaN objective marks an infeasible point, which
/// the line search steps back from. `h0` is an optional initial inverse
/// Hessian.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &Options, h0: Option<DMatrix<f64>>) -> Outcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut f, g0) = fg(x0);
    let mut evaluations = 1;
    if !f.is_finite() || n == 0 {
        return Outcome {
            x: x0.to_vec(),
            f,
            grad: g0,
            iterations: 0,
            evaluations,
            converged: n == 0 && f.is_finite(),
        };
    }
    let mut g = DVector::from_vec(g0);
    let scaled_identity = |g: &DVector<f64>| {
        DMatrix::<f64>::identity(n, n) * (1.0 / g.amax().max(1.0))
    };
    let mut fresh = h0.is_none();
    let mut h = h0.unwrap_or_else(|| scaled_identity(&g));
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if scaled_gradient(x.as_slice(), g.as_slice(), f) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = scaled_identity(&g);
            fresh = true;
            d = -(&h * &g);
            slope = g.dot(&d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * step;
            let (fnew, gnew) = fg(xn.as_slice());
            evaluations += 1;
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                accepted = Some((xn, fnew, DVector::from_vec(gnew)));
                break;
            }
            step *= if fnew.is_finite() { 0.5 } else { 0.25 };
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if fresh {
                converged = scaled_gradient(x.as_slice(), g.as_slice(), f) < opts.grad_tol * 1e3;
                break;
            }
            h = scaled_identity(&g);
            fresh = true;
            continue;
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h = DMatrix::<f64>::identity(n, n) * (sy / y.dot(&y));
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 yHy + rho) s s'
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let df = f - fnew;
        x = xn;
        g = gnew;
        f = fnew;
        if df.abs() <= opts.f_tol * f.abs().max(1.0) {
            stall += 1;
            if stall >= 3 {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    Outcome {
        x: x.as_slice().to_vec(),
        f,
        grad: g.as_slice().to_vec(),
        iterations,
        evaluations,
        converged,
    }
}

/// Central-difference gradient with steps `rel * max(|x_i|, 1)`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], rel: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Symmetrized Hessian by central differences of a gradient, with steps
/// `rel * max(|x_i|, 1)`. Returns `None` if any gradient is non-finite.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64], rel: f64) -> Option<DMatrix<f64>>
where
    G: FnMut(&[f64]) -> Option<Vec<f64>>,
{
    let n = x.len();
    let mut hm = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = rel * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let gp = grad(&xp)?;
        xp[j] = x[j] - h;
        let gm = grad(&xp)?;
        xp[j] = x[j];
        for i in 0..n {
            let v = (gp[i] - gm[i]) / (2.0 * h);
            if !v.is_finite() {
                return None;
            }
            hm[(i, j)] = v;
        }
    }
    Some((&hm + hm.transpose()) * 0.5)
}

/// Inverse of a symmetric matrix if it is positive definite.
pub fn inverse_if_pd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    Some(chol.inverse())
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
