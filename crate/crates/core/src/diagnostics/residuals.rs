//! Quantile residuals `r_i = Phi^{-1}(F(y_i; fitted parameters))`.
//!
//! The response is continuous, so no randomization is needed.

use serde::{Deserialize, Serialize};

use super::normality::{normality_tests, NormalityPvalues};
use crate::error::{Error, Result};
use crate::regression::{FitResult, ModelSpec, Objective};
use crate::special::norm_quantile;

/// Fitted cdf values are kept inside `[CDF_CLAMP, 1 - CDF_CLAMP]`.
pub const CDF_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub test_pvalues: NormalityPvalues,
    /// Number of cdf values that had to be clamped.
    pub clamped: usize,
}

/// Residuals and the number of clamped cdf values.
pub fn rqr(fit: &FitResult, spec: &ModelSpec, y: &[f64]) -> Result<(Vec<f64>, usize)> {
    if !fit.converged {
        return Err(Error::NotConverged("residuals need a converged fit".into()));
    }
    let cdf = fitted_cdf(fit, spec, y)?;
    let mut clamped = 0;
    let r = cdf
        .into_iter()
        .map(|p| {
            let c = p.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP);
            if c != p {
                clamped += 1;
            }
            norm_quantile(c)
        })
        .collect();
    Ok((r, clamped))
}

/// `F(y_i)` under each observation's fitted conditional law.
pub fn fitted_cdf(fit: &FitResult, spec: &ModelSpec, y: &[f64]) -> Result<Vec<f64>> {
    let obj = Objective::new(spec, y)?;
    let theta = fit.theta_flat();
    if theta.len() != spec.dim() {
        return Err(Error::Dimension("fit does not match the model".into()));
    }
    let shape = obj.shape(&theta);
    Ok((0..spec.n())
        .map(|i| {
            let (eta1, eta2) = obj.eta(&theta, i);
            let t = eta2.exp() * (obj.link_y[i] - eta1) + shape.shift;
            (shape.alpha * spec.kernel.log_cdf(t)).exp()
        })
        .collect())
}

/// Residuals together with the four normality p-values.
pub fn residual_report(fit: &FitResult, spec: &ModelSpec, y: &[f64]) -> Result<ResidualReport> {
    let (residuals, clamped) = rqr(fit, spec, y)?;
    let test_pvalues = normality_tests(&residuals)?;
    Ok(ResidualReport {
        residuals,
        test_pvalues,
        clamped,
    })
}
