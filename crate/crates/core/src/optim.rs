//! Quasi-Newton (BFGS) minimizer driven by finite-difference gradients.
//!
//! The line search is Armijo backtracking with safeguarded quadratic
//! interpolation; non-finite trial values are treated as infeasible and
//! shrink the step. The inverse Hessian approximation is reset to a scaled
//! identity whenever the search direction stops being a descent direction
//! or the line search fails. Up to ten consecutive iterations with a relative
//! decrease below `f_rel_tol` are tolerated before giving up.

use nalgebra::{DMatrix, DVector};

use crate::numdiff;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Relative function decrease below which an iteration counts as stalled.
    pub f_rel_tol: f64,
    /// Convergence when `max |g| < grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            f_rel_tol: 1e-10,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const MAX_STALLS: usize = 10;

fn grad_ok(g: &DVector<f64>, f: f64, tol: f64) -> bool {
    g.amax() < tol * (1.0 + f.abs())
}

pub fn minimize<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome
where
    F: Fn(&[f64]) -> f64,
{
    let k = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return BfgsOutcome {
            x: x0.to_vec(),
            f: fx,
            grad: vec![f64::NAN; k],
            iterations: 0,
            converged: false,
        };
    }
    let mut g = DVector::from_vec(numdiff::gradient(&f, x.as_slice()));
    let mut hinv = DMatrix::<f64>::identity(k, k);
    let mut fresh = true;
    let mut stalls = 0usize;
    let mut iterations = 0usize;

    while iterations < opts.max_iter {
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        if grad_ok(&g, fx, opts.grad_tol) {
            return BfgsOutcome {
                x: x.as_slice().to_vec(),
                f: fx,
                grad: g.as_slice().to_vec(),
                iterations,
                converged: true,
            };
        }
        iterations += 1;

        let mut dir = -(&hinv * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(k, k);
            fresh = true;
            dir = -g.clone();
            slope = dir.dot(&g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial = &x + &dir * step;
            if trial == x {
                break;
            }
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + ARMIJO * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step = if ft.is_finite() {
                let denom = 2.0 * (ft - fx - slope * step);
                let interp = -slope * step * step / denom;
                interp.clamp(0.1 * step, 0.5 * step)
            } else {
                0.1 * step
            };
        }

        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            hinv = DMatrix::identity(k, k);
            fresh = true;
            continue;
        };

        let g_new = DVector::from_vec(numdiff::gradient(&f, x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let rel_decrease = (fx - f_new) / (fx.abs() + 1e-10);
        x = x_new;
        fx = f_new;
        g = g_new;

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                let scale = sy / y.dot(&y);
                hinv = DMatrix::identity(k, k) * scale;
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            hinv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }

        if rel_decrease < opts.f_rel_tol {
            if grad_ok(&g, fx, opts.grad_tol) {
                continue;
            }
            // keep the curvature estimate: tiny decreases near the optimum of
            // an ill-conditioned problem are normal, and restarting from
            // steepest descent only makes them smaller
            stalls += 1;
            if stalls > MAX_STALLS {
                break;
            }
        } else {
            stalls = 0;
        }
    }

    let converged = g.iter().all(|v| v.is_finite()) && grad_ok(&g, fx, opts.grad_tol);
    BfgsOutcome {
        x: x.as_slice().to_vec(),
        f: fx,
        grad: g.as_slice().to_vec(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = minimize(f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(out.converged);
        assert!(
            (out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            out.x
        );
    }

    #[test]
    fn respects_infeasible_region() {
        // log barrier: infinite for x <= 0
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                f64::INFINITY
            } else {
                x[0] - 2.0 * x[0].ln()
            }
        };
        let out = minimize(f, &[0.1], &BfgsOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_start_is_reported() {
        let out = minimize(|_| f64::NAN, &[0.0, 0.0], &BfgsOptions::default());
        assert!(!out.converged);
        assert_eq!(out.iterations, 0);
    }
}
