//! Quasi-Newton minimization and finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

/// A smooth objective to be minimized. Implementations return `+inf` (or
/// NaN) outside the region where the objective is defined.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    /// Value and gradient. The default uses central differences.
    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(x), central_gradient(|v| self.value(v), x))
    }
}

/// Step used by central differences: `eps^(1/3) * max(1, |x|)`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

pub fn central_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>) -> DVector<f64> {
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let h = fd_step(x[i]);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        (up - down) / (2.0 * h)
    })
}

/// Symmetrized Hessian from central differences of the gradient.
pub fn fd_hessian<O: Objective + ?Sized>(obj: &O, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let (_, up) = obj.value_and_gradient(&probe);
        probe[j] = x[j] - h;
        let (_, down) = obj.value_and_gradient(&probe);
        probe[j] = x[j];
        hess.set_column(j, &((up - down) / (2.0 * h)));
    }
    (&hess + hess.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when the gradient's infinity norm falls below this.
    pub grad_tol: f64,
    /// Converged when the relative change in the objective falls below this.
    pub rel_tol: f64,
    /// Seed the inverse-Hessian approximation with the inverted
    /// finite-difference Hessian at the start point when it is positive definite.
    pub hessian_start: bool,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            hessian_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn initial_inverse_hessian<O: Objective + ?Sized>(
    obj: &O,
    x: &DVector<f64>,
    opts: &BfgsOptions,
) -> Option<DMatrix<f64>> {
    if !opts.hessian_start {
        return None;
    }
    let hess = fd_hessian(obj, x);
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    hess.cholesky().map(|c| c.inverse())
}

/// BFGS with a backtracking Armijo line search.
///
/// Non-finite trial values shrink the step, so the objective may signal
/// leaving its domain by returning `+inf`.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: DVector<f64>, opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = obj.value_and_gradient(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return BfgsResult {
            x,
            value: f,
            gradient: g,
            iterations: 0,
            converged: false,
        };
    }
    let mut inv_h = initial_inverse_hessian(obj, &x, opts);
    let mut scaled_identity = inv_h.is_none();
    let mut h = inv_h.take().unwrap_or_else(|| DMatrix::identity(n, n));

    for iter in 0..opts.max_iter {
        if g.amax() < opts.grad_tol {
            return BfgsResult {
                x,
                value: f,
                gradient: g,
                iterations: iter,
                converged: true,
            };
        }
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            // Lost positive definiteness: restart from steepest descent.
            h = DMatrix::identity(n, n);
            scaled_identity = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }

        let mut step = 1.0;
        if scaled_identity {
            // Keep the first steepest-descent step at a modest length.
            step = (1.0 / dir.amax()).min(1.0);
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &dir * step;
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= if ft.is_finite() { 0.5 } else { 0.1 };
        }
        let Some((x_new, _)) = accepted else {
            // No decrease possible along the search direction: accept when the
            // gradient is at the rounding level of the objective.
            let stalled = g.amax() < opts.grad_tol.max(1e-6 * f.abs());
            return BfgsResult {
                x,
                value: f,
                gradient: g,
                iterations: iter,
                converged: stalled,
            };
        };
        let (f_new, g_new) = obj.value_and_gradient(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        let rel_change = (f - f_new).abs() / f.abs().max(1.0);

        if sy > 1e-12 * s.norm() * y.norm() {
            if scaled_identity {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                scaled_identity = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }

        x = x_new;
        f = f_new;
        g = g_new;
        if rel_change < opts.rel_tol {
            return BfgsResult {
                x,
                value: f,
                gradient: g,
                iterations: iter + 1,
                converged: true,
            };
        }
    }
    let converged = g.amax() < opts.grad_tol;
    BfgsResult {
        x,
        value: f,
        gradient: g,
        iterations: opts.max_iter,
        converged,
    }
}
