//! The power generalized Johnson S_B family and its two quantile
//! parameterizations.
//!
//! Every member has cdf `F(y) = G(t)^alpha` with
//! `t = delta * (Q(y) - location) + shift`. The first parameterization sets
//! `location = Q(psi)` and `shift = G^{-1}(q^{1/alpha})`, so `psi` is the
//! `q`-quantile for any shape `alpha`. The second pins
//! `alpha = -log(q)/log(2)`, which makes the shift vanish and `xi` the
//! `q`-quantile.
//!
//! The density of `Y` is
//! `delta * alpha * G(t)^(alpha-1) * g(t) * Q'(y)`; the same `t` appears in
//! both the `G` and the `g` factor.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_open_unit, check_positive, Result};
use crate::kernel::{KernelFamily, LinkTransform};

/// `x*_q(alpha) = G^{-1}(q^{1/alpha})`, evaluated through `log q / alpha` so
/// that tiny shapes do not underflow.
pub fn xstar(kernel: KernelFamily, q: f64, alpha: f64) -> Result<f64> {
    check_open_unit("q", q)?;
    check_positive("alpha", alpha)?;
    Ok(kernel.quantile_log(q.ln() / alpha))
}

/// The shape that anchors the median of `G` at the `q`-quantile:
/// `(1/2)^alpha = q`.
pub fn alpha_of_q(q: f64) -> Result<f64> {
    check_open_unit("q", q)?;
    Ok(-q.log2())
}

/// A PGJSB member written as `G(delta * (Q(y) - location) + shift)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pgjsb {
    pub kernel: KernelFamily,
    pub link: LinkTransform,
    pub location: f64,
    pub delta: f64,
    pub alpha: f64,
    pub shift: f64,
}

impl Pgjsb {
    /// The `(gamma, delta, alpha)` form `G(gamma + delta * Q(y))^alpha`.
    pub fn from_gamma(gamma: f64, delta: f64, alpha: f64, kernel: KernelFamily, link: LinkTransform) -> Result<Self> {
        check_finite("gamma", gamma)?;
        check_positive("delta", delta)?;
        check_positive("alpha", alpha)?;
        Ok(Self {
            kernel,
            link,
            location: 0.0,
            delta,
            alpha,
            shift: gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.shift - self.delta * self.location
    }

    #[inline]
    fn argument(&self, link_value: f64) -> f64 {
        self.delta * (link_value - self.location) + self.shift
    }

    /// Log density of `U = Q(Y)` at `u`.
    pub fn log_pdf_link(&self, u: f64) -> f64 {
        let t = self.argument(u);
        self.delta.ln() + self.kernel.log_power_density(t, self.alpha, self.alpha.ln())
    }

    pub fn log_pdf(&self, y: f64) -> Result<f64> {
        let u = self.link.forward(y)?;
        Ok(self.log_pdf_link(u) + self.link.log_deriv_unchecked(y))
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        let u = self.link.forward(y)?;
        let t = self.argument(u);
        let log_g = self.kernel.log_cdf(t);
        if log_g < -745.0 / (self.alpha - 1.0).max(1.0) {
            return Ok(0.0);
        }
        Ok((self.log_pdf_link(u) + self.link.log_deriv_unchecked(y)).exp())
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        let u = self.link.forward(y)?;
        Ok(self.cdf_link(u))
    }

    /// `P(Q(Y) <= u)`.
    pub fn cdf_link(&self, u: f64) -> f64 {
        (self.alpha * self.kernel.log_cdf(self.argument(u))).exp()
    }

    /// Closed-form inverse of the cdf.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        check_open_unit("p", p)?;
        Ok(self.link.inverse(self.quantile_link(p)))
    }

    /// Quantile of `Q(Y)`.
    pub fn quantile_link(&self, p: f64) -> f64 {
        let t = self.kernel.quantile_log(p.ln() / self.alpha);
        self.location + (t - self.shift) / self.delta
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                self.link.inverse(self.quantile_link(u))
            })
            .collect()
    }
}

/// Quantile parameterization with a free shape: `psi` is the `q`-quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rpgjsb1Params {
    pub psi: f64,
    pub delta: f64,
    pub alpha: f64,
    pub q: f64,
    pub kernel: KernelFamily,
    pub link: LinkTransform,
}

impl Rpgjsb1Params {
    pub fn new(psi: f64, delta: f64, alpha: f64, q: f64, kernel: KernelFamily, link: LinkTransform) -> Result<Self> {
        check_open_unit("psi", psi)?;
        check_positive("delta", delta)?;
        check_positive("alpha", alpha)?;
        check_open_unit("q", q)?;
        Ok(Self {
            psi,
            delta,
            alpha,
            q,
            kernel,
            link,
        })
    }

    pub fn pgjsb(&self) -> Pgjsb {
        Pgjsb {
            kernel: self.kernel,
            link: self.link,
            location: self.link.forward_unchecked(self.psi),
            delta: self.delta,
            alpha: self.alpha,
            shift: self.kernel.quantile_log(self.q.ln() / self.alpha),
        }
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.pgjsb().pdf(y)
    }
    pub fn log_pdf(&self, y: f64) -> Result<f64> {
        self.pgjsb().log_pdf(y)
    }
    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.pgjsb().cdf(y)
    }
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.pgjsb().quantile(p)
    }
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        self.pgjsb().sample(n, rng)
    }
}

/// Quantile parameterization with the shape pinned at `alpha_of_q(q)`:
/// `xi` is the `q`-quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rpgjsb2Params {
    pub xi: f64,
    pub delta: f64,
    pub q: f64,
    pub kernel: KernelFamily,
    pub link: LinkTransform,
}

impl Rpgjsb2Params {
    pub fn new(xi: f64, delta: f64, q: f64, kernel: KernelFamily, link: LinkTransform) -> Result<Self> {
        check_open_unit("xi", xi)?;
        check_positive("delta", delta)?;
        check_open_unit("q", q)?;
        Ok(Self {
            xi,
            delta,
            q,
            kernel,
            link,
        })
    }

    pub fn alpha(&self) -> f64 {
        -self.q.log2()
    }

    pub fn pgjsb(&self) -> Pgjsb {
        Pgjsb {
            kernel: self.kernel,
            link: self.link,
            location: self.link.forward_unchecked(self.xi),
            delta: self.delta,
            alpha: self.alpha(),
            // G^{-1}(q^{1/alpha(q)}) = G^{-1}(1/2) = 0 for symmetric kernels
            shift: 0.0,
        }
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.pgjsb().pdf(y)
    }
    pub fn log_pdf(&self, y: f64) -> Result<f64> {
        self.pgjsb().log_pdf(y)
    }
    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.pgjsb().cdf(y)
    }
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.pgjsb().quantile(p)
    }
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        self.pgjsb().sample(n, rng)
    }
}

pub fn pdf1(y: f64, p: &Rpgjsb1Params) -> Result<f64> {
    p.pdf(y)
}
pub fn log_pdf1(y: f64, p: &Rpgjsb1Params) -> Result<f64> {
    p.log_pdf(y)
}
pub fn cdf1(y: f64, p: &Rpgjsb1Params) -> Result<f64> {
    p.cdf(y)
}
pub fn quantile1(prob: f64, p: &Rpgjsb1Params) -> Result<f64> {
    p.quantile(prob)
}
/// Inverse-cdf draws from a ChaCha8 stream seeded with `seed`.
pub fn sample1(p: &Rpgjsb1Params, n: usize, seed: u64) -> Vec<f64> {
    p.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn pdf2(y: f64, p: &Rpgjsb2Params) -> Result<f64> {
    p.pdf(y)
}
pub fn log_pdf2(y: f64, p: &Rpgjsb2Params) -> Result<f64> {
    p.log_pdf(y)
}
pub fn cdf2(y: f64, p: &Rpgjsb2Params) -> Result<f64> {
    p.cdf(y)
}
pub fn quantile2(prob: f64, p: &Rpgjsb2Params) -> Result<f64> {
    p.quantile(prob)
}
pub fn sample2(p: &Rpgjsb2Params, n: usize, seed: u64) -> Vec<f64> {
    p.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use KernelFamily::*;
    use LinkTransform::*;

    #[test]
    fn xstar_examples() {
        assert_eq!(xstar(Normal, 0.5, 1.0).unwrap(), 0.0);
        assert!(xstar(Logistic, 0.25, 2.0).unwrap().abs() < 1e-15);
        assert!((xstar(Normal, 0.5, 2.0).unwrap() - 0.544_952_1).abs() < 1e-7);
        assert!(xstar(Normal, 0.0, 1.0).is_err());
        assert!(xstar(Normal, 0.5, 0.0).is_err());
        assert!(xstar(Normal, 0.5, -1.0).is_err());
    }

    #[test]
    fn alpha_of_q_examples() {
        assert_eq!(alpha_of_q(0.5).unwrap(), 1.0);
        assert_eq!(alpha_of_q(0.25).unwrap(), 2.0);
        assert!((alpha_of_q(0.9).unwrap() - 0.152_003_1).abs() < 1e-7);
        assert!(alpha_of_q(1.0).is_err());
    }

    #[test]
    fn pdf1_reference_points() {
        let p = Rpgjsb1Params::new(0.5, 1.0, 1.0, 0.5, Normal, Logit).unwrap();
        assert!((p.pdf(0.5).unwrap() - 1.595_769_1).abs() < 1e-7);
        let p = Rpgjsb1Params::new(0.5, 1.0, 1.0, 0.5, Logistic, Logit).unwrap();
        assert!((p.pdf(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(p.pdf(0.0).is_err());
        assert!(p.pdf(1.0).is_err());
    }

    #[test]
    fn uniform_reduction() {
        let p = Rpgjsb1Params::new(0.5, 1.0, 1.0, 0.5, Logistic, Logit).unwrap();
        assert!((p.cdf(0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((p.quantile(0.3).unwrap() - 0.3).abs() < 1e-15);
        for y in [0.01, 0.2, 0.77, 0.99] {
            assert!((p.pdf(y).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_anchoring() {
        let p = Rpgjsb1Params::new(0.4, 2.0, 0.7, 0.25, Normal, Logit).unwrap();
        assert!((p.cdf(0.4).unwrap() - 0.25).abs() < 1e-12);
        assert!((p.quantile(0.25).unwrap() - 0.4).abs() < 1e-12);
        let p2 = Rpgjsb2Params::new(0.3, 0.8, 0.9, Logistic, Cloglog).unwrap();
        assert!((p2.cdf(0.3).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf_on_grid() {
        let p = Rpgjsb1Params::new(0.4, 1.3, 2.5, 0.3, Cauchy, Probit).unwrap();
        for i in 1..10 {
            let y = i as f64 / 10.0;
            let back = p.quantile(p.cdf(y).unwrap()).unwrap();
            assert!((back - y).abs() < 1e-10, "{y} -> {back}");
        }
    }

    #[test]
    fn extreme_exponent_guard() {
        // normal kernel far in the lower tail with a large shape exponent
        let p = Rpgjsb1Params::new(0.9, 2.0, 50.0, 0.5, Normal, Logit).unwrap();
        assert_eq!(p.pdf(1e-9).unwrap(), 0.0);
        let lp = p.log_pdf(1e-9).unwrap();
        assert!(lp.is_finite() && lp < -745.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = Rpgjsb1Params::new(0.4, 1.0, 0.5, 0.5, Normal, Logit).unwrap();
        assert_eq!(sample1(&p, 50, 7), sample1(&p, 50, 7));
        assert_ne!(sample1(&p, 50, 7), sample1(&p, 50, 8));
        let p2 = Rpgjsb2Params::new(0.4, 1.0, 0.2, Cauchy, Loglog).unwrap();
        let s = sample2(&p2, 1000, 3);
        assert!(s.iter().all(|&y| y > 0.0 && y < 1.0));
    }

    #[test]
    fn gamma_form_matches_quantile_form() {
        let p = Rpgjsb1Params::new(0.35, 1.7, 0.6, 0.2, Logistic, Cauchit).unwrap();
        let d = p.pgjsb();
        let g = Pgjsb::from_gamma(d.gamma(), 1.7, 0.6, Logistic, Cauchit).unwrap();
        for y in [0.05, 0.35, 0.8] {
            let a = p.log_pdf(y).unwrap();
            let b = g.log_pdf(y).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}
