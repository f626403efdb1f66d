//! Symmetric kernel families `G` and link transforms `Q`.
//!
//! Every quantity needed by the likelihood is available in log space
//! (`log_pdf`, `log_cdf`, `log_deriv`) so that densities stay finite far in
//! the tails.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_open_unit, Error, Result};
use crate::special;

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// The symmetric kernel whose cdf is raised to a power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Normal,
    Logistic,
    Cauchy,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [Self::Normal, Self::Logistic, Self::Cauchy];

    pub fn pdf(self, u: f64) -> f64 {
        self.log_pdf(u).exp()
    }

    pub fn log_pdf(self, u: f64) -> f64 {
        match self {
            Self::Normal => special::norm_log_pdf(u),
            Self::Logistic => {
                let a = u.abs();
                -a - 2.0 * (-a).exp().ln_1p()
            }
            Self::Cauchy => {
                let a = u.abs();
                if a > 1e150 {
                    -LN_PI - 2.0 * a.ln()
                } else {
                    -LN_PI - (a * a).ln_1p()
                }
            }
        }
    }

    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Self::Normal => special::norm_cdf(u),
            Self::Logistic => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            Self::Cauchy => {
                if u == 0.0 {
                    0.5
                } else if u < 0.0 {
                    (-1.0 / u).atan() / PI
                } else {
                    1.0 - (1.0 / u).atan() / PI
                }
            }
        }
    }

    pub fn log_cdf(self, u: f64) -> f64 {
        match self {
            Self::Normal => special::norm_log_cdf(u),
            Self::Logistic => {
                if u >= 0.0 {
                    -(-u).exp().ln_1p()
                } else {
                    u - u.exp().ln_1p()
                }
            }
            Self::Cauchy => {
                if u == 0.0 {
                    -LN_2
                } else if u < 0.0 {
                    ((-1.0 / u).atan() / PI).ln()
                } else {
                    (-(1.0 / u).atan() / PI).ln_1p()
                }
            }
        }
    }

    /// `log(g(u) / G(u))`.
    pub fn log_reverse_hazard(self, u: f64) -> f64 {
        match self {
            Self::Normal => special::norm_log_reverse_hazard(u),
            // g / G = 1 - G(u) = G(-u)
            Self::Logistic => self.log_cdf(-u),
            Self::Cauchy => self.log_pdf(u) - self.log_cdf(u),
        }
    }

    /// `log(alpha g(u) G(u)^(alpha - 1))`, the log density of the powered
    /// kernel. Written as `alpha log G + log(g / G)` so that tiny `alpha`
    /// in the far lower tail does not cancel catastrophically.
    pub fn log_power_density(self, u: f64, alpha: f64, log_alpha: f64) -> f64 {
        if alpha == 1.0 {
            return log_alpha + self.log_pdf(u);
        }
        log_alpha + alpha * self.log_cdf(u) + self.log_reverse_hazard(u)
    }

    /// `G^{-1}(p)`; domain error unless `p` lies in (0, 1).
    pub fn quantile(self, p: f64) -> Result<f64> {
        check_open_unit("p", p)?;
        Ok(self.quantile_log(p.ln()))
    }

    /// `G^{-1}(exp(log_p))` for `log_p <= 0`. Stays accurate when `p`
    /// underflows or when `1 - p` is tiny; saturates to `-inf`/`+inf`.
    pub fn quantile_log(self, log_p: f64) -> f64 {
        match self {
            Self::Normal => special::norm_quantile_log(log_p),
            Self::Logistic => {
                if log_p == 0.0 {
                    f64::INFINITY
                } else {
                    log_p - (-log_p.exp_m1()).ln()
                }
            }
            Self::Cauchy => {
                if log_p == 0.0 {
                    f64::INFINITY
                } else if log_p < -LN_2 {
                    let p = log_p.exp();
                    if p == 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        -1.0 / (PI * p).tan()
                    }
                } else {
                    let c = -log_p.exp_m1();
                    if c == 0.5 {
                        0.0
                    } else {
                        1.0 / (PI * c).tan()
                    }
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Logistic => "logistic",
            Self::Cauchy => "cauchy",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Self::Normal),
            "logistic" => Ok(Self::Logistic),
            "cauchy" => Ok(Self::Cauchy),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Strictly increasing transform `Q: (0,1) -> R`.
///
/// `Loglog` is `-log(-log y)` (the Gumbel quantile) and `Cloglog` is
/// `log(-log(1 - y))` (the reverse-Gumbel quantile).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkTransform {
    Logit,
    Probit,
    Cauchit,
    Loglog,
    Cloglog,
}

/// Largest double below one; `inverse` saturates here.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

impl LinkTransform {
    pub const ALL: [LinkTransform; 5] = [Self::Logit, Self::Probit, Self::Cauchit, Self::Loglog, Self::Cloglog];

    /// `Q(y)`; domain error unless `y` lies in (0, 1).
    pub fn forward(self, y: f64) -> Result<f64> {
        check_open_unit("y", y)?;
        Ok(self.forward_unchecked(y))
    }

    pub(crate) fn forward_unchecked(self, y: f64) -> f64 {
        match self {
            Self::Logit => y.ln() - (-y).ln_1p(),
            Self::Probit => special::norm_quantile(y),
            Self::Cauchit => {
                if y == 0.5 {
                    0.0
                } else if y < 0.5 {
                    -1.0 / (PI * y).tan()
                } else {
                    1.0 / (PI * (1.0 - y)).tan()
                }
            }
            Self::Loglog => -(-y.ln()).ln(),
            Self::Cloglog => (-(-y).ln_1p()).ln(),
        }
    }

    /// `Q^{-1}(x)`, saturated to the open interval of representable doubles.
    pub fn inverse(self, x: f64) -> f64 {
        let y = match self {
            Self::Logit => KernelFamily::Logistic.cdf(x),
            Self::Probit => special::norm_cdf(x),
            Self::Cauchit => KernelFamily::Cauchy.cdf(x),
            Self::Loglog => (-(-x).exp()).exp(),
            Self::Cloglog => -(-x.exp()).exp_m1(),
        };
        if y.is_nan() {
            y
        } else {
            y.clamp(f64::MIN_POSITIVE, ONE_MINUS)
        }
    }

    /// `dQ/dy`; domain error unless `y` lies in (0, 1).
    pub fn deriv(self, y: f64) -> Result<f64> {
        check_open_unit("y", y)?;
        Ok(self.log_deriv_unchecked(y).exp())
    }

    /// `log(dQ/dy)`; domain error unless `y` lies in (0, 1).
    pub fn log_deriv(self, y: f64) -> Result<f64> {
        check_open_unit("y", y)?;
        Ok(self.log_deriv_unchecked(y))
    }

    pub(crate) fn log_deriv_unchecked(self, y: f64) -> f64 {
        match self {
            Self::Logit => -y.ln() - (-y).ln_1p(),
            Self::Probit => {
                let z = special::norm_quantile(y);
                special::LN_SQRT_2PI + 0.5 * z * z
            }
            Self::Cauchit => {
                let z = self.forward_unchecked(y);
                LN_PI + (z * z).ln_1p()
            }
            Self::Loglog => {
                let l = -y.ln();
                -y.ln() - l.ln()
            }
            Self::Cloglog => {
                let l = -(-y).ln_1p();
                -(-y).ln_1p() - l.ln()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Logit => "logit",
            Self::Probit => "probit",
            Self::Cauchit => "cauchit",
            Self::Loglog => "loglog",
            Self::Cloglog => "cloglog",
        }
    }
}

impl fmt::Display for LinkTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logit" => Ok(Self::Logit),
            "probit" => Ok(Self::Probit),
            "cauchit" => Ok(Self::Cauchit),
            "loglog" => Ok(Self::Loglog),
            "cloglog" => Ok(Self::Cloglog),
            other => Err(Error::Config(format!("unknown link '{other}'"))),
        }
    }
}

pub fn g_pdf(family: KernelFamily, u: f64) -> f64 {
    family.pdf(u)
}

pub fn g_cdf(family: KernelFamily, u: f64) -> f64 {
    family.cdf(u)
}

pub fn g_quantile(family: KernelFamily, p: f64) -> Result<f64> {
    family.quantile(p)
}

pub fn link_forward(link: LinkTransform, y: f64) -> Result<f64> {
    link.forward(y)
}

pub fn link_inverse(link: LinkTransform, x: f64) -> Result<f64> {
    check_finite("x", x)?;
    Ok(link.inverse(x))
}

pub fn link_deriv(link: LinkTransform, y: f64) -> Result<f64> {
    link.deriv(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn pdf_examples() {
        assert!(close(g_pdf(KernelFamily::Logistic, 0.0), 0.25, 1e-15));
        assert!(close(g_pdf(KernelFamily::Normal, 0.0), 0.398_942_280_4, 1e-10));
        assert!(close(g_pdf(KernelFamily::Cauchy, 1.0), 0.159_154_943_1, 1e-10));
    }

    #[test]
    fn cdf_examples() {
        assert!(close(g_cdf(KernelFamily::Logistic, 0.0), 0.5, 1e-15));
        assert!(close(g_cdf(KernelFamily::Normal, 1.959_964), 0.975, 1e-7));
        assert!(close(g_cdf(KernelFamily::Cauchy, 1.0), 0.75, 1e-15));
    }

    #[test]
    fn quantile_examples_and_domain() {
        assert_eq!(g_quantile(KernelFamily::Logistic, 0.5).unwrap(), 0.0);
        assert!(close(
            g_quantile(KernelFamily::Logistic, 0.75).unwrap(),
            3f64.ln(),
            1e-14
        ));
        assert!(close(g_quantile(KernelFamily::Normal, 0.975).unwrap(), 1.959_964, 1e-6));
        assert_eq!(g_quantile(KernelFamily::Cauchy, 0.5).unwrap(), 0.0);
        for k in KernelFamily::ALL {
            assert!(matches!(k.quantile(0.0), Err(Error::Domain { .. })));
            assert!(matches!(k.quantile(1.0), Err(Error::Domain { .. })));
            assert!(k.quantile(f64::NAN).is_err());
        }
    }

    #[test]
    fn link_examples() {
        let l = LinkTransform::Logit;
        assert_eq!(link_forward(l, 0.5).unwrap(), 0.0);
        assert!(link_forward(LinkTransform::Cloglog, 1.0 - (-1f64).exp()).unwrap().abs() < 1e-15);
        assert!(link_forward(LinkTransform::Loglog, (-1f64).exp()).unwrap().abs() < 1e-15);
        assert_eq!(link_inverse(l, 0.0).unwrap(), 0.5);
        assert!(close(
            link_inverse(LinkTransform::Probit, 1.959_964).unwrap(),
            0.975,
            1e-7
        ));
        assert!(close(
            link_inverse(LinkTransform::Cloglog, 0.0).unwrap(),
            0.632_120_6,
            1e-7
        ));
        assert!(close(link_deriv(l, 0.5).unwrap(), 4.0, 1e-15));
        assert!(close(link_deriv(l, 0.25).unwrap(), 5.333_333_3, 1e-8));
        assert!(close(
            link_deriv(LinkTransform::Cloglog, 0.5).unwrap(),
            2.885_390_1,
            1e-8
        ));
    }

    #[test]
    fn link_domain_errors() {
        for l in LinkTransform::ALL {
            for y in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
                assert!(l.forward(y).is_err());
                assert!(l.deriv(y).is_err());
            }
            assert!(link_inverse(l, f64::INFINITY).is_err());
        }
    }

    #[test]
    fn inverse_saturates_inside_unit_interval() {
        for l in LinkTransform::ALL {
            for x in [-1e6, -800.0, 800.0, 1e6] {
                let y = l.inverse(x);
                assert!(y > 0.0 && y < 1.0, "{l} {x} -> {y}");
            }
        }
    }

    #[test]
    fn names_parse_back() {
        for k in KernelFamily::ALL {
            assert_eq!(k.name().parse::<KernelFamily>().unwrap(), k);
        }
        for l in LinkTransform::ALL {
            assert_eq!(l.to_string().parse::<LinkTransform>().unwrap(), l);
        }
        assert!("gumbel".parse::<KernelFamily>().is_err());
    }
}
