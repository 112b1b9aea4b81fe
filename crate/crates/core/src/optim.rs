//! Generic smooth solvers used by the gain searches.
//!
//! Objectives and residual maps may return `None` to signal that a trial
//! point left the admissible region (typically an unstable closed loop); the
//! line searches treat that exactly like a failed sufficient-decrease test.

use nalgebra::{DMatrix, DVector};

use crate::linalg::symmetrize;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once `‖∇f‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Upper bound on the Euclidean length of a single step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gradient_tolerance: 1e-9, max_step: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Quasi-Newton minimization with an Armijo backtracking line search.
///
/// `f` returns the value and gradient, or `None` outside the domain. The
/// starting point must be inside the domain.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Option<BfgsOutcome>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g) = f(x.as_slice())?;
    if !fx.is_finite() {
        return None;
    }
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if inf_norm(g.as_slice()) <= opts.gradient_tolerance {
            break;
        }
        let mut d = -(&h * &g);
        let mut slope = d.dot(&g);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
            slope = d.dot(&g);
        }
        if fresh {
            // Unscaled first steps can be wildly off; cap the initial trial.
            let len = d.norm();
            if len > opts.max_step {
                d *= opts.max_step / len;
                slope = d.dot(&g);
            }
        } else {
            let len = d.norm();
            if len > 10.0 * opts.max_step {
                d *= 10.0 * opts.max_step / len;
                slope = d.dot(&g);
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &d * t;
            if let Some((ft, gt)) = f(trial.as_slice()) {
                if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                    accepted = Some((trial, ft, DVector::from_vec(gt)));
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((xn, fnew, gn)) = accepted else {
            if fresh {
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        let stalled = s.norm() <= 1e-15 * (1.0 + x.norm());
        x = xn;
        fx = fnew;
        g = gn;
        if stalled {
            break;
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h = symmetrize(&h);
        }
    }
    let gradient_inf = inf_norm(g.as_slice());
    Some(BfgsOutcome {
        x: x.as_slice().to_vec(),
        value: fx,
        gradient_inf,
        iterations,
        converged: gradient_inf <= opts.gradient_tolerance,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub max_iterations: usize,
    /// Converged once `‖r‖∞` falls below this.
    pub tolerance: f64,
    /// Relative forward-difference step for the Jacobian.
    pub jacobian_step: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-10, jacobian_step: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct RootOutcome {
    pub x: Vec<f64>,
    pub residual_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Forward-difference Jacobian of `r` at `x` given `r(x) = r0`.
pub fn forward_jacobian<R>(r: &R, x: &[f64], r0: &[f64], rel_step: f64) -> Option<DMatrix<f64>>
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let rp = r(&xp)?;
        xp[j] = x[j];
        for i in 0..r0.len() {
            jac[(i, j)] = (rp[i] - r0[i]) / h;
        }
    }
    Some(jac)
}

/// Levenberg–Marquardt damped Newton iteration for `r(x) = 0` with a
/// forward-difference Jacobian.
pub fn solve_root<R>(r: R, x0: &[f64], opts: &RootOptions) -> Option<RootOutcome>
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut rx = r(&x)?;
    let mut norm2: f64 = rx.iter().map(|v| v * v).sum();
    let mut mu = 1e-6;
    let mut iterations = 0;
    while iterations < opts.max_iterations && inf_norm(&rx) > opts.tolerance {
        iterations += 1;
        let Some(jac) = forward_jacobian(&r, &x, &rx, opts.jacobian_step) else {
            break;
        };
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&rx);
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += mu * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rn) = r(&xn) {
                let n2: f64 = rn.iter().map(|v| v * v).sum();
                if n2.is_finite() && n2 < norm2 {
                    x = xn;
                    rx = rn;
                    norm2 = n2;
                    mu = (mu / 10.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual_inf = inf_norm(&rx);
    Some(RootOutcome { x, residual_inf, iterations, converged: residual_inf <= opts.tolerance })
}

/// Symmetrized central-difference Hessian from an analytic gradient.
pub fn central_hessian<G>(grad: G, x: &[f64], step: f64) -> Option<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + step;
        let gp = grad(&xp)?;
        xp[j] = x[j] - step;
        let gm = grad(&xp)?;
        xp[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Some(symmetrize(&hess))
}
