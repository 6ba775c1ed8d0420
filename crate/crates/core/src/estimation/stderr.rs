//! Standard errors from a finite-difference Hessian in the unconstrained space, mapped back
//! by the delta method.

use super::spec::Parametrization;
use nalgebra::DMatrix;

/// Per-coordinate steps for a noisy objective: starting from `h0`, each step is doubled
/// or halved until the symmetric second difference at `x` lies in [lo, hi] (absolute).
pub fn adaptive_steps<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h0: f64, lo: f64, hi: f64) -> Vec<f64> {
    let f0 = f(x);
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut h = h0;
            for _ in 0..8 {
                y[i] = x[i] + h;
                let fp = f(&y);
                y[i] = x[i] - h;
                let fm = f(&y);
                y[i] = x[i];
                let d2 = (fp + fm - 2.0 * f0).abs();
                if !d2.is_finite() || d2 > hi {
                    h *= 0.5;
                } else if d2 < lo {
                    h *= 2.0;
                } else {
                    break;
                }
            }
            h
        })
        .collect()
}

/// Central-difference Hessian of `f` at `x` with step `h[i]` along coordinate i.
pub fn hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut hm = DMatrix::zeros(n, n);
    let mut y = x.to_vec();
    for i in 0..n {
        let hi = h[i];
        y[i] = x[i] + hi;
        let fp = f(&y);
        y[i] = x[i] - hi;
        let fm = f(&y);
        y[i] = x[i];
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = h[j];
            let mut g = |di: f64, dj: f64| {
                y[i] = x[i] + di;
                y[j] = x[j] + dj;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let v = (g(hi, hj) - g(hi, -hj) - g(-hi, hj) + g(-hi, -hj)) / (4.0 * hi * hj);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

/// Standard errors of the constrained parameters for a log-likelihood `loglik` over the
/// unconstrained vector, maximized at `x_hat`, with finite-difference steps `h`.
/// `None` when −H is not positive definite.
pub fn std_errors<F: FnMut(&[f64]) -> f64>(loglik: F, par: &Parametrization, x_hat: &[f64], h: &[f64]) -> Option<Vec<f64>> {
    let n = x_hat.len();
    if n == 0 {
        return Some(vec![]);
    }
    let neg_h = -hessian(loglik, x_hat, h);
    if neg_h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cov_u = neg_h.cholesky()?.inverse();
    // Jacobian of the constrained parameters with respect to the unconstrained ones.
    let eps = 1e-6;
    let mut jac = DMatrix::zeros(n, n);
    let mut y = x_hat.to_vec();
    for j in 0..n {
        y[j] = x_hat[j] + eps;
        let p = par.to_constrained(&y);
        y[j] = x_hat[j] - eps;
        let m = par.to_constrained(&y);
        y[j] = x_hat[j];
        for i in 0..n {
            jac[(i, j)] = (p[i] - m[i]) / (2.0 * eps);
        }
    }
    let cov = &jac * cov_u * jac.transpose();
    let se: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    se.iter().all(|s| s.is_finite()).then_some(se)
}
