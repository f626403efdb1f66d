//! Local influence (Cook's normal curvature) and case deletion.
//!
//! The perturbation matrix `nabla` (dim theta x n) holds the mixed partials
//! of the perturbed log-likelihood in `(theta_j, w_i)` at the fit and at the
//! no-perturbation point `w0`, taken by central differences. With the
//! observed information `Sigma`, `B = nabla' M nabla` where `M = Sigma^{-1}`
//! for the full parameter, or `Sigma^{-1} - diag(0, Sigma_22^{-1})` when the
//! curvature targets a subset (the nuisance block being everything else).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{
    fit, invert_symmetric, is_positive_definite, obs_loglik, FitOptions, FitResult, ModelSpec, Objective, Shape,
    Variant, WaldRow, RESPONSE_CLAMP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `l(theta; w) = sum w_i l_i(theta)`, `w0 = 1`.
    CaseWeight,
    /// `y_i(w) = y_i w_i s_y` with `s_y` the sample sd of `y`, `w0 = 1 / s_y`.
    Response,
    /// Both linear predictors of case `i` scaled by `w_i`, `w0 = 1`.
    Predictor,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::CaseWeight, Scheme::Response, Scheme::Predictor];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CaseWeight => "case_weight",
            Scheme::Response => "response",
            Scheme::Predictor => "predictor",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "case_weight" | "case" | "weight" => Ok(Scheme::CaseWeight),
            "response" => Ok(Scheme::Response),
            "predictor" => Ok(Scheme::Predictor),
            other => Err(Error::Config(format!("unknown perturbation scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Theta,
    Beta,
    Nu,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Theta, Target::Beta, Target::Nu];

    pub fn name(self) -> &'static str {
        match self {
            Target::Theta => "theta",
            Target::Beta => "beta",
            Target::Nu => "nu",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "theta" | "all" => Ok(Target::Theta),
            "beta" => Ok(Target::Beta),
            "nu" => Ok(Target::Nu),
            other => Err(Error::Config(format!("unknown influence target '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InfluenceOptions {
    /// Response scheme only: evaluate the free-shape likelihood with the
    /// kernel argument written without the anchoring shift, as the source
    /// text literally reads. Off by default; for comparison only.
    pub literal_response_shift: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub scheme: Scheme,
    pub target: Target,
    /// `C_i = 2 B_ii`.
    pub c: Vec<f64>,
    /// Unit eigenvector of `B` for its largest eigenvalue (largest entry
    /// made positive).
    pub d_max: Vec<f64>,
    /// Largest eigenvalue of `B`; the maximal curvature is twice this.
    pub lambda_max: f64,
    /// `2 * mean(C_i)`.
    pub threshold: f64,
    pub flagged: Vec<usize>,
}

/// FD step for the influence derivatives.
#[inline]
fn fd_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

fn sample_sd(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

struct Perturbed<'a> {
    obj: Objective<'a>,
    y: &'a [f64],
    scheme: Scheme,
    s_y: f64,
    literal: bool,
}

impl Perturbed<'_> {
    fn w0(&self) -> f64 {
        match self.scheme {
            Scheme::Response => 1.0 / self.s_y,
            _ => 1.0,
        }
    }

    fn shape(&self, theta: &[f64]) -> Shape {
        let mut s = self.obj.shape(theta);
        if self.literal && self.scheme == Scheme::Response && self.obj.spec.variant == Variant::Rpgjsb1 {
            s.shift = 0.0;
        }
        s
    }

    /// Contribution of case `i` at parameter `theta` and perturbation `w`.
    fn cell(&self, theta: &[f64], i: usize, w: f64) -> f64 {
        let spec = self.obj.spec;
        let shape = self.shape(theta);
        let (eta1, eta2) = self.obj.eta(theta, i);
        match self.scheme {
            Scheme::CaseWeight => {
                w * obs_loglik(spec.kernel, &shape, self.obj.link_y[i], self.obj.log_dq[i], eta1, eta2)
            }
            Scheme::Response => {
                let yw = (self.y[i] * w * self.s_y).clamp(RESPONSE_CLAMP, 1.0 - RESPONSE_CLAMP);
                let u = spec.link.forward_unchecked(yw);
                let ldq = spec.link.log_deriv_unchecked(yw);
                obs_loglik(spec.kernel, &shape, u, ldq, eta1, eta2)
            }
            Scheme::Predictor => obs_loglik(
                spec.kernel,
                &shape,
                self.obj.link_y[i],
                self.obj.log_dq[i],
                w * eta1,
                w * eta2,
            ),
        }
    }

    /// Step in `w` for case `i`, shrunk until the perturbed response stays in
    /// the open unit interval.
    fn w_step(&self, i: usize) -> Result<f64> {
        let w0 = self.w0();
        let mut k = fd_step(w0);
        if self.scheme != Scheme::Response {
            return Ok(k);
        }
        let inside = |w: f64| {
            let v = self.y[i] * w * self.s_y;
            v > 0.0 && v < 1.0
        };
        for _ in 0..200 {
            if inside(w0 + k) && inside(w0 - k) {
                return Ok(k);
            }
            k *= 0.5;
        }
        Err(Error::Degenerate(format!(
            "response perturbation of case {i} cannot stay inside (0, 1)"
        )))
    }
}

/// Mixed partials `d^2 l(theta; w) / d theta_j d w_i` at `(theta_hat, w0)`.
pub fn perturbation_nabla(
    fit: &FitResult,
    spec: &ModelSpec,
    y: &[f64],
    scheme: Scheme,
    options: &InfluenceOptions,
) -> Result<DMatrix<f64>> {
    let theta = fit.theta_flat();
    if theta.len() != spec.dim() {
        return Err(Error::Dimension("fit does not match the model".into()));
    }
    let s_y = sample_sd(y);
    if scheme == Scheme::Response && !(s_y > 0.0) {
        return Err(Error::Degenerate("response perturbation needs a non-constant y".into()));
    }
    let pert = Perturbed {
        obj: Objective::new(spec, y)?,
        y,
        scheme,
        s_y,
        literal: options.literal_response_shift,
    };
    let dim = theta.len();
    let n = spec.n();
    let w0 = pert.w0();
    let mut out = DMatrix::zeros(dim, n);
    let mut plus = theta.clone();
    let mut minus = theta.clone();
    for i in 0..n {
        let k = pert.w_step(i)?;
        for j in 0..dim {
            let h = fd_step(theta[j]);
            plus[j] = theta[j] + h;
            minus[j] = theta[j] - h;
            let v = if scheme == Scheme::CaseWeight {
                // linear in w: the w-difference is exact
                (pert.cell(&plus, i, 1.0) - pert.cell(&minus, i, 1.0)) / (2.0 * h)
            } else {
                (pert.cell(&plus, i, w0 + k) - pert.cell(&plus, i, w0 - k) - pert.cell(&minus, i, w0 + k)
                    + pert.cell(&minus, i, w0 - k))
                    / (4.0 * h * k)
            };
            plus[j] = theta[j];
            minus[j] = theta[j];
            out[(j, i)] = v;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{scheme} perturbation matrix")));
    }
    Ok(out)
}

fn target_indices(spec: &ModelSpec, target: Target) -> Vec<usize> {
    let (p, r) = (spec.p(), spec.r());
    match target {
        Target::Theta => (0..spec.dim()).collect(),
        Target::Beta => (0..p).collect(),
        Target::Nu => (p..p + r).collect(),
    }
}

/// The matrix `M` in `B = nabla' M nabla` for a target.
pub fn target_weight_matrix(fit: &FitResult, spec: &ModelSpec, target: Target) -> Result<DMatrix<f64>> {
    let info = &fit.observed_info;
    let dim = spec.dim();
    if info.nrows() != dim || info.ncols() != dim {
        return Err(Error::Dimension("observed information does not match the model".into()));
    }
    if !is_positive_definite(info) {
        return Err(Error::Singular("observed information is not positive definite".into()));
    }
    let mut m = invert_symmetric(info)?;
    if target == Target::Theta {
        return Ok(m);
    }
    let focus = target_indices(spec, target);
    let nuisance: Vec<usize> = (0..dim).filter(|j| !focus.contains(j)).collect();
    if !nuisance.is_empty() {
        let s22 = info.select_rows(&nuisance).select_columns(&nuisance);
        let s22_inv = invert_symmetric(&s22)?;
        for (a, &ja) in nuisance.iter().enumerate() {
            for (b, &jb) in nuisance.iter().enumerate() {
                m[(ja, jb)] -= s22_inv[(a, b)];
            }
        }
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// `A` with `A'A = nabla' M nabla`, via the eigendecomposition of the small
/// matrix `M` (negative rounding-level eigenvalues are dropped).
fn root_factor(m: &DMatrix<f64>, nabla: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax();
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| if l > 1e-14 * scale { l.sqrt() } else { 0.0 }),
    );
    let vt_nabla = eig.eigenvectors.transpose() * nabla;
    DMatrix::from_fn(vt_nabla.nrows(), vt_nabla.ncols(), |a, i| roots[a] * vt_nabla[(a, i)])
}

/// The full `n x n` curvature matrix `B`. Quadratic in `n`; intended for
/// checks and small data.
pub fn curvature_matrix(
    fit: &FitResult,
    spec: &ModelSpec,
    y: &[f64],
    scheme: Scheme,
    target: Target,
    options: &InfluenceOptions,
) -> Result<DMatrix<f64>> {
    let nabla = perturbation_nabla(fit, spec, y, scheme, options)?;
    let m = target_weight_matrix(fit, spec, target)?;
    let b = nabla.transpose() * m * &nabla;
    Ok((&b + b.transpose()) * 0.5)
}

pub fn local_influence(
    fit: &FitResult,
    spec: &ModelSpec,
    y: &[f64],
    scheme: Scheme,
    target: Target,
    options: &InfluenceOptions,
) -> Result<InfluenceReport> {
    let nabla = perturbation_nabla(fit, spec, y, scheme, options)?;
    let m = target_weight_matrix(fit, spec, target)?;
    let a = root_factor(&m, &nabla);
    let n = spec.n();
    let c: Vec<f64> = (0..n).map(|i| 2.0 * a.column(i).norm_squared()).collect();

    // top eigenpair of B = A'A through the small matrix A A'
    let small = &a * a.transpose();
    let eig = SymmetricEigen::new((&small + small.transpose()) * 0.5);
    let (top, lambda_max) =
        eig.eigenvalues.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, &l)| if l > acc.1 { (k, l) } else { acc },
        );
    let mut d = a.transpose() * eig.eigenvectors.column(top);
    let norm = d.norm();
    if norm > 0.0 {
        d /= norm;
    } else {
        d = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    }
    let imax = d.iamax();
    if d[imax] < 0.0 {
        d = -d;
    }

    let threshold = 2.0 * c.iter().sum::<f64>() / n as f64;
    let flagged = (0..n).filter(|&i| c[i] > threshold).collect();
    Ok(InfluenceReport {
        scheme,
        target,
        c,
        d_max: d.as_slice().to_vec(),
        lambda_max: lambda_max.max(0.0),
        threshold,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcRow {
    pub name: String,
    pub full_estimate: f64,
    pub reduced_estimate: f64,
    /// `100 |theta_j - theta_j(-i)| / |theta_j|`, or the absolute change when
    /// `theta_j = 0` (see `absolute`).
    pub rc_percent: f64,
    pub rcse_percent: f64,
    /// The estimate (or its se) was exactly zero, so the change is absolute.
    pub absolute: bool,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

#[derive(Debug, Clone)]
pub struct CaseDeletion {
    pub dropped: usize,
    pub rows: Vec<RcRow>,
    pub reduced_fit: FitResult,
}

fn relative_change(full: f64, reduced: f64) -> (f64, bool) {
    if full == 0.0 {
        ((full - reduced).abs(), true)
    } else {
        (100.0 * (full - reduced).abs() / full.abs(), false)
    }
}

/// RC and RCSE rows comparing two fits of the same model; p-values come
/// from the second (reduced) fit's Wald table.
pub fn relative_change_table(full: &FitResult, reduced: &FitResult) -> Result<Vec<RcRow>> {
    if full.param_names != reduced.param_names {
        return Err(Error::Dimension("fits have different parameters".into()));
    }
    let a = full.theta_flat();
    let b = reduced.theta_flat();
    Ok(full
        .param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (rc, abs_est) = relative_change(a[j], b[j]);
            let (rcse, abs_se) = relative_change(full.se[j], reduced.se[j]);
            let w = WaldRow::new(name.clone(), b[j], reduced.se[j]);
            RcRow {
                name: name.clone(),
                full_estimate: a[j],
                reduced_estimate: b[j],
                rc_percent: rc,
                rcse_percent: rcse,
                absolute: abs_est || abs_se,
                p_one_sided: w.p_one_sided,
                p_two_sided: w.p_two_sided,
            }
        })
        .collect())
}

/// Refits without case `drop_index` (warm-started at the full estimate) and
/// reports relative changes.
pub fn case_deletion_rc(
    fit_full: &FitResult,
    spec: &ModelSpec,
    y: &[f64],
    drop_index: usize,
    options: &FitOptions,
) -> Result<CaseDeletion> {
    let n = spec.n();
    if drop_index >= n {
        return Err(Error::Dimension(format!("drop index {drop_index} out of range 0..{n}")));
    }
    if n - 1 <= spec.dim() {
        return Err(Error::Design("too few cases left after deletion".into()));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != drop_index).collect();
    let reduced_spec = spec.select_rows(&keep)?;
    let reduced_y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    let opts = FitOptions {
        start: Some(fit_full.theta_flat()),
        ..options.clone()
    };
    let reduced = fit(&reduced_spec, &reduced_y, &opts)?;
    if !reduced.converged {
        return Err(Error::NotConverged(format!("refit without case {drop_index}")));
    }
    Ok(CaseDeletion {
        dropped: drop_index,
        rows: relative_change_table(fit_full, &reduced)?,
        reduced_fit: reduced,
    })
}
