//! Central finite differences with the step rule `h = max(1e-5, 1e-5 |x|)`.

use nalgebra::DMatrix;

#[inline]
pub fn step(x: f64) -> f64 {
    (1e-5 * x.abs()).max(1e-5)
}

/// Nudges `x` by roughly `h` and returns the perturbed value together with
/// the step that was actually representable.
#[inline]
fn nudge(x: f64, h: f64) -> (f64, f64) {
    let xp = x + h;
    (xp, xp - x)
}

/// Central-difference gradient.
pub fn gradient<F>(f: F, x: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut work = x.to_vec();
    let mut out = vec![0.0; x.len()];
    for j in 0..x.len() {
        let (xp, h) = nudge(x[j], step(x[j]));
        work[j] = xp;
        let fp = f(&work);
        work[j] = x[j] - h;
        let fm = f(&work);
        work[j] = x[j];
        out[j] = (fp - fm) / (2.0 * h);
    }
    out
}

/// Central second differences, symmetrized as `(H + H^T) / 2`.
///
/// `f0` is `f(x)` when the caller already has it.
pub fn hessian<F>(f: F, x: &[f64], f0: Option<f64>) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let k = x.len();
    let f0 = f0.unwrap_or_else(|| f(x));
    let steps: Vec<f64> = x.iter().map(|&v| nudge(v, step(v)).1).collect();
    let mut work = x.to_vec();
    let mut h = DMatrix::zeros(k, k);
    for j in 0..k {
        let hj = steps[j];
        work[j] = x[j] + hj;
        let fp = f(&work);
        work[j] = x[j] - hj;
        let fm = f(&work);
        work[j] = x[j];
        h[(j, j)] = (fp - 2.0 * f0 + fm) / (hj * hj);
        for l in 0..j {
            let hl = steps[l];
            let mut corner = |sj: f64, sl: f64| {
                work[j] = x[j] + sj * hj;
                work[l] = x[l] + sl * hl;
                let v = f(&work);
                work[j] = x[j];
                work[l] = x[l];
                v
            };
            let fpp = corner(1.0, 1.0);
            let fpm = corner(1.0, -1.0);
            let fmp = corner(-1.0, 1.0);
            let fmm = corner(-1.0, -1.0);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hj * hl);
            h[(j, l)] = v;
            h[(l, j)] = v;
        }
    }
    (&h + h.transpose()) * 0.5
}
