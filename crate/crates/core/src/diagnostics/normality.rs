//! Normality tests for quantile residuals.
//!
//! Kolmogorov–Smirnov, Anderson–Darling and Cramér–von Mises test the fully
//! specified N(0, 1) null; Shapiro–Wilk tests composite normality (any mean and
//! variance), using Royston's 1995 approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_log_cdf, norm_quantile, upper_tail_p};

/// Smallest sample accepted by [`normality_tests`].
pub const MIN_SAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityPvalues {
    pub ks: f64,
    pub sw: f64,
    pub ad: f64,
    pub cvm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted_finite(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("normality test input".into()));
    }
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    Ok(s)
}

/// All four p-values. Needs `n >= 8` and a sample that is not constant.
pub fn normality_tests(x: &[f64]) -> Result<NormalityPvalues> {
    if x.len() < MIN_SAMPLE {
        return Err(Error::Degenerate(format!(
            "normality tests need at least {MIN_SAMPLE} values, got {}",
            x.len()
        )));
    }
    Ok(NormalityPvalues {
        ks: kolmogorov_smirnov(x)?.p_value,
        sw: shapiro_wilk(x)?.p_value,
        ad: anderson_darling(x)?.p_value,
        cvm: cramer_von_mises(x)?.p_value,
    })
}

// ---------------------------------------------------------------- KS

/// One-sample KS test against N(0, 1).
pub fn kolmogorov_smirnov(x: &[f64]) -> Result<TestResult> {
    let s = sorted_finite(x)?;
    let n = s.len();
    if n == 0 {
        return Err(Error::Degenerate("empty sample".into()));
    }
    let nf = n as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = norm_cdf(v);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_sf(n, d),
    })
}

/// `P(D_n >= d)`; the far tail comes straight from the tail approximation
/// rather than from `1 - cdf`.
pub fn kolmogorov_sf(n: usize, d: f64) -> f64 {
    let nf = n as f64;
    let s = d * d * nf;
    if d < 1.0 && (s > 7.24 || (s > 3.76 && n > 99)) {
        return (2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp()).min(1.0);
    }
    (1.0 - kolmogorov_cdf(n, d)).clamp(0.0, 1.0)
}

/// `P(D_n < d)` for the two-sided one-sample statistic, by the
/// Marsaglia–Tsang–Wang matrix method, with their tail shortcut.
pub fn kolmogorov_cdf(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nf = n as f64;
    let s = d * d * nf;
    if s > 7.24 || (s > 3.76 && n > 99) {
        return 1.0 - 2.0 * (-(2.000071 + 0.331 / nf.sqrt() + 1.409 / nf) * s).exp();
    }
    let k = (nf * d) as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nf * d;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, mut e) = matrix_power(&hm, m, n);
    let mut v = q[(k - 1) * m + k - 1];
    for i in 1..=n {
        v = v * i as f64 / nf;
        if v < 1e-140 {
            v *= 1e140;
            e -= 140;
        }
    }
    v * 10f64.powi(e)
}

fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let ail = a[i * m + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    c
}

/// `A^n` with a decimal exponent kept separately to avoid overflow.
fn matrix_power(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (half, e_half) = matrix_power(a, m, n / 2);
    let mut v = matmul(&half, &half, m);
    let mut e = 2 * e_half;
    if n % 2 == 1 {
        v = matmul(a, &v, m);
    }
    if v[(m / 2) * m + m / 2] > 1e140 {
        for x in &mut v {
            *x *= 1e-140;
        }
        e += 140;
    }
    (v, e)
}

// ---------------------------------------------------------------- SW

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro–Wilk W with Royston's p-value approximation (`3 <= n <= 5000`).
/// A constant sample is reported as degenerate.
pub fn shapiro_wilk(x: &[f64]) -> Result<TestResult> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];

    let s = sorted_finite(x)?;
    let n = s.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::Degenerate(format!("Shapiro-Wilk needs 3 <= n <= 5000, got {n}")));
    }
    let range = s[n - 1] - s[0];
    if !(range > 1e-19 * s[0].abs().max(s[n - 1].abs()).max(1.0)) {
        return Err(Error::Degenerate("sample has zero range".into()));
    }

    let nf = n as f64;
    let half = n / 2;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let m: Vec<f64> = (1..=half)
            .map(|i| norm_quantile((i as f64 - 0.375) / (nf + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / nf.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = s.iter().sum::<f64>() / nf;
    let ss: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..half).map(|i| a[i] * (s[n - 1 - i] - s[i])).sum();
    let w = (num * num / ss).min(1.0);

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::PI / 3.0;
        (pi6 * (w.sqrt().asin() - stqr)).max(0.0)
    } else {
        let mut w1 = (1.0 - w).ln();
        let (mu, sigma) = if n <= 11 {
            let gamma = poly(&G, nf);
            if w1 >= gamma {
                return Ok(TestResult {
                    statistic: w,
                    p_value: 1e-99,
                });
            }
            w1 = -(gamma - w1).ln();
            (poly(&C3, nf), poly(&C4, nf).exp())
        } else {
            let ln_n = nf.ln();
            (poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        upper_tail_p((w1 - mu) / sigma)
    };
    Ok(TestResult {
        statistic: w,
        p_value: p.clamp(0.0, 1.0),
    })
}

// ---------------------------------------------------------------- AD

/// Anderson–Darling test against N(0, 1), p-value from the Marsaglia (2004)
/// approximation of the finite-`n` null distribution.
pub fn anderson_darling(x: &[f64]) -> Result<TestResult> {
    let s = sorted_finite(x)?;
    let n = s.len();
    if n == 0 {
        return Err(Error::Degenerate("empty sample".into()));
    }
    let nf = n as f64;
    let sum: f64 = (0..n)
        .map(|i| {
            let c = (2 * i + 1) as f64;
            c * (norm_log_cdf(s[i]) + norm_log_cdf(-s[n - 1 - i]))
        })
        .sum();
    let a2 = -nf - sum / nf;
    Ok(TestResult {
        statistic: a2,
        p_value: (1.0 - anderson_darling_cdf(n, a2)).clamp(0.0, 1.0),
    })
}

/// Asymptotic `P(A^2 < z)`.
pub fn anderson_darling_cdf_inf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

/// `P(A_n^2 < z)`: asymptotic value plus the finite-sample correction.
pub fn anderson_darling_cdf(n: usize, z: f64) -> f64 {
    let nf = n as f64;
    let x = anderson_darling_cdf_inf(z);
    let v = if x > 0.8 {
        (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / nf
    } else {
        let c = 0.01265 + 0.1757 / nf;
        if x < c {
            let t = x / c;
            let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
            t * (0.0037 / (nf * nf) + 0.00078 / nf + 0.00006) / nf
        } else {
            let t = (x - c) / (0.8 - c);
            let t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
            t * (0.04213 / nf + 0.01365 / (nf * nf)) / nf
        }
    };
    (x + v).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------- CvM

/// Cramér–von Mises test against N(0, 1) with the asymptotic null
/// distribution.
pub fn cramer_von_mises(x: &[f64]) -> Result<TestResult> {
    let s = sorted_finite(x)?;
    let n = s.len();
    if n == 0 {
        return Err(Error::Degenerate("empty sample".into()));
    }
    let nf = n as f64;
    let w2 = 1.0 / (12.0 * nf)
        + s.iter()
            .enumerate()
            .map(|(i, &v)| (norm_cdf(v) - (2 * i + 1) as f64 / (2.0 * nf)).powi(2))
            .sum::<f64>();
    Ok(TestResult {
        statistic: w2,
        p_value: (1.0 - cramer_von_mises_cdf(w2)).clamp(0.0, 1.0),
    })
}

/// `exp(x) K_{1/4}(x)` by trapezoidal quadrature of
/// `int_0^inf exp(-x (cosh t - 1)) cosh(t / 4) dt`, which converges
/// geometrically for this analytic, doubly-exponentially decaying integrand.
fn scaled_bessel_k_quarter(x: f64) -> f64 {
    const H: f64 = 0.05;
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let t = k as f64 * H;
        let term = (-x * (t.cosh() - 1.0)).exp() * (0.25 * t).cosh();
        sum += term;
        if term < 1e-18 * sum || k > 100_000 {
            break;
        }
        k += 1;
    }
    sum * H
}

/// Asymptotic `P(W^2 <= z)` (Anderson & Darling, 1952):
/// `1/(pi sqrt z) sum_j [Gamma(j+1/2) / (Gamma(1/2) j!)] sqrt(4j+1) exp(-u_j) K_{1/4}(u_j)`
/// with `u_j = (4j+1)^2 / (16 z)`.
pub fn cramer_von_mises_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z > 20.0 {
        return 1.0;
    }
    let mut total = 0.0;
    // Gamma(j + 1/2) / (Gamma(1/2) j!)
    let mut coef = 1.0;
    for j in 0..200 {
        if j > 0 {
            coef *= (j as f64 - 0.5) / j as f64;
        }
        let a = (4 * j + 1) as f64;
        let u = a * a / (16.0 * z);
        let term = coef * a.sqrt() * (-2.0 * u).exp() * scaled_bessel_k_quarter(u);
        total += term;
        if term < 1e-17 {
            break;
        }
    }
    (total / (std::f64::consts::PI * z.sqrt())).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_reference_values() {
        // exact values from the Marsaglia-Tsang-Wang paper / R's ks.test
        assert!((kolmogorov_cdf(10, 0.274) - 0.6284796154565043).abs() < 1e-6);
        // asymptotic 5% critical value 1.3581 / sqrt(n)
        let d = 1.3581 / (1000f64).sqrt();
        assert!((kolmogorov_cdf(1000, d) - 0.95).abs() < 3e-3);
    }

    #[test]
    fn anderson_darling_critical_value() {
        // asymptotic 5% point 2.492, 1% point 3.857
        assert!((anderson_darling_cdf_inf(2.492) - 0.95).abs() < 1e-3);
        assert!((anderson_darling_cdf_inf(3.857) - 0.99).abs() < 1e-3);
    }

    #[test]
    fn cramer_von_mises_critical_values() {
        // asymptotic 5% point 0.46136, 1% point 0.74346, 10% point 0.34730
        assert!((cramer_von_mises_cdf(0.46136) - 0.95).abs() < 1e-4);
        assert!((cramer_von_mises_cdf(0.74346) - 0.99).abs() < 1e-4);
        assert!((cramer_von_mises_cdf(0.34730) - 0.90).abs() < 1e-4);
    }

    #[test]
    fn shapiro_wilk_reference() {
        // strongly right-skewed sample
        let x = [
            148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0, 236.0,
        ];
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.statistic < 0.85, "{}", r.statistic);
        assert!(r.p_value < 0.02, "{}", r.p_value);
        // evenly spaced normal scores are as normal as it gets
        let scores: Vec<f64> = (1..=50).map(|i| norm_quantile((i as f64 - 0.375) / 50.25)).collect();
        let r = shapiro_wilk(&scores).unwrap();
        assert!(r.statistic > 0.99 && r.p_value > 0.9, "{:?}", r);
        assert!(matches!(shapiro_wilk(&[1.0; 10]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn small_samples_rejected() {
        assert!(normality_tests(&[0.1, 0.2, 0.3]).is_err());
        assert!(normality_tests(&[0.0; 12]).is_err());
    }
}
