//! Quantile regression on the unit interval.
//!
//! The `q`-quantile and the dispersion follow
//! `Q(psi_i) = x_i' beta` and `log(delta_i) = z_i' nu`, with the same link `Q`
//! used inside the density. The free-shape variant carries `log(alpha)` as the
//! last coordinate of the parameter vector.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::alpha_of_q;
use crate::error::{check_open_unit, Error, Result};
use crate::kernel::{KernelFamily, LinkTransform};
use crate::numdiff;
use crate::optim::{self, BfgsOptions};
use crate::special;

/// Responses are pulled into `[EPS, 1 - EPS]` before `Q` inside the likelihood.
pub const RESPONSE_CLAMP: f64 = 1e-12;

/// Relative eigenvalue floor for the positive-definiteness check.
pub const PD_RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Free shape `alpha`; `psi` is the `q`-quantile.
    Rpgjsb1,
    /// Shape pinned at `alpha_of_q(q)`; `xi` is the `q`-quantile.
    Rpgjsb2,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Rpgjsb1, Variant::Rpgjsb2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rpgjsb1 => "rpgjsb1",
            Variant::Rpgjsb2 => "rpgjsb2",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rpgjsb1" | "1" => Ok(Variant::Rpgjsb1),
            "rpgjsb2" | "2" => Ok(Variant::Rpgjsb2),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let tol = max * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Model family plus the two design matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub q: f64,
    pub kernel: KernelFamily,
    pub link: LinkTransform,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    quantile_names: Vec<String>,
    scale_names: Vec<String>,
}

impl ModelSpec {
    /// Checks `q`, finiteness, full column rank of both designs and `p + r < n`.
    /// `z` may have zero columns, in which case every `delta_i = 1`.
    pub fn new(
        variant: Variant,
        q: f64,
        kernel: KernelFamily,
        link: LinkTransform,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
    ) -> Result<Self> {
        check_open_unit("q", q)?;
        let n = x.nrows();
        if z.nrows() != n {
            return Err(Error::Dimension(format!(
                "quantile design has {n} rows but scale design has {}",
                z.nrows()
            )));
        }
        let (p, r) = (x.ncols(), z.ncols());
        if p == 0 {
            return Err(Error::Design("quantile design needs at least one column".into()));
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Design("design matrices contain non-finite entries".into()));
        }
        if p + r >= n {
            return Err(Error::Design(format!("need p + r < n, got p={p}, r={r}, n={n}")));
        }
        if numerical_rank(&x) < p {
            return Err(Error::Design(format!("quantile design is rank deficient (p={p})")));
        }
        if numerical_rank(&z) < r {
            return Err(Error::Design(format!("scale design is rank deficient (r={r})")));
        }
        Ok(Self {
            variant,
            q,
            kernel,
            link,
            quantile_names: (0..p).map(|j| format!("beta{j}")).collect(),
            scale_names: (0..r).map(|j| format!("nu{j}")).collect(),
            x,
            z,
        })
    }

    pub fn with_names(mut self, quantile: Vec<String>, scale: Vec<String>) -> Result<Self> {
        if quantile.len() != self.p() || scale.len() != self.r() {
            return Err(Error::Dimension("coefficient names do not match the designs".into()));
        }
        self.quantile_names = quantile;
        self.scale_names = scale;
        Ok(self)
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    pub fn with_q(&self, q: f64) -> Result<Self> {
        check_open_unit("q", q)?;
        Ok(Self { q, ..self.clone() })
    }

    /// Same model on the listed rows only (designs are re-validated).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows);
        let z = self.z.select_rows(rows);
        Self::new(self.variant, self.q, self.kernel, self.link, x, z)?
            .with_names(self.quantile_names.clone(), self.scale_names.clone())
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn r(&self) -> usize {
        self.z.ncols()
    }

    /// Length of the flattened parameter vector.
    pub fn dim(&self) -> usize {
        self.p() + self.r() + usize::from(self.variant == Variant::Rpgjsb1)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.quantile_names.clone();
        names.extend(self.scale_names.iter().cloned());
        if self.variant == Variant::Rpgjsb1 {
            names.push("log_alpha".to_string());
        }
        names
    }
}

/// Structured view of the flattened parameter vector
/// `(beta_1..beta_p, nu_1..nu_r[, log alpha])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta: Vec<f64>,
    pub nu: Vec<f64>,
    pub log_alpha: Option<f64>,
}

impl ParamVector {
    pub fn new(beta: Vec<f64>, nu: Vec<f64>, log_alpha: Option<f64>) -> Self {
        Self { beta, nu, log_alpha }
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self::from_flat(spec, &vec![0.0; spec.dim()]).expect("dimension matches")
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.nu);
        if let Some(a) = self.log_alpha {
            v.push(a);
        }
        v
    }

    pub fn from_flat(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.dim() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, model needs {}",
                flat.len(),
                spec.dim()
            )));
        }
        let (p, r) = (spec.p(), spec.r());
        Ok(Self {
            beta: flat[..p].to_vec(),
            nu: flat[p..p + r].to_vec(),
            log_alpha: (spec.variant == Variant::Rpgjsb1).then(|| flat[p + r]),
        })
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        let ok = self.beta.len() == spec.p()
            && self.nu.len() == spec.r()
            && self.log_alpha.is_some() == (spec.variant == Variant::Rpgjsb1);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("parameter vector does not match the model".into()))
        }
    }
}

/// Shape and anchoring shift implied by a parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Shape {
    pub alpha: f64,
    pub log_alpha: f64,
    pub shift: f64,
}

/// Per-observation log-likelihood on the link scale.
///
/// `link_y` is `Q(y)`, `log_dq` is `log Q'(y)`, `eta1`/`eta2` the two linear
/// predictors.
#[inline]
pub(crate) fn obs_loglik(kernel: KernelFamily, shape: &Shape, link_y: f64, log_dq: f64, eta1: f64, eta2: f64) -> f64 {
    let t = eta2.exp() * (link_y - eta1) + shape.shift;
    let core = match kernel {
        KernelFamily::Logistic => {
            // shares exp(-|t|) between log G(t) and log G(-t)
            let a = t.abs();
            let l = (-a).exp().ln_1p();
            let (log_cdf, log_sf) = if t >= 0.0 { (-l, -t - l) } else { (t - l, -l) };
            shape.log_alpha + shape.alpha * log_cdf + log_sf
        }
        _ => kernel.log_power_density(t, shape.alpha, shape.log_alpha),
    };
    eta2 + core + log_dq
}

/// Precomputed response transforms plus row-major designs for fast repeated
/// likelihood evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Objective<'a> {
    pub spec: &'a ModelSpec,
    pub link_y: Vec<f64>,
    pub log_dq: Vec<f64>,
    xr: Vec<f64>,
    zr: Vec<f64>,
}

pub(crate) fn check_response(spec: &ModelSpec, y: &[f64]) -> Result<()> {
    if y.len() != spec.n() {
        return Err(Error::Dimension(format!(
            "response has {} values, design has {} rows",
            y.len(),
            spec.n()
        )));
    }
    for &v in y {
        check_open_unit("y", v)?;
    }
    Ok(())
}

impl<'a> Objective<'a> {
    pub fn new(spec: &'a ModelSpec, y: &[f64]) -> Result<Self> {
        check_response(spec, y)?;
        let (link_y, log_dq) = y
            .iter()
            .map(|&v| {
                let c = v.clamp(RESPONSE_CLAMP, 1.0 - RESPONSE_CLAMP);
                (spec.link.forward_unchecked(c), spec.link.log_deriv_unchecked(c))
            })
            .unzip();
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Ok(Self {
            spec,
            link_y,
            log_dq,
            xr: row_major(&spec.x),
            zr: row_major(&spec.z),
        })
    }

    pub fn shape(&self, theta: &[f64]) -> Shape {
        match self.spec.variant {
            Variant::Rpgjsb1 => {
                let log_alpha = theta[self.spec.p() + self.spec.r()];
                let alpha = log_alpha.exp();
                Shape {
                    alpha,
                    log_alpha,
                    shift: self.spec.kernel.quantile_log(self.spec.q.ln() / alpha),
                }
            }
            Variant::Rpgjsb2 => {
                let alpha = -self.spec.q.log2();
                Shape {
                    alpha,
                    log_alpha: alpha.ln(),
                    shift: 0.0,
                }
            }
        }
    }

    #[inline]
    pub fn eta(&self, theta: &[f64], i: usize) -> (f64, f64) {
        let (p, r) = (self.spec.p(), self.spec.r());
        let xi = &self.xr[i * p..(i + 1) * p];
        let zi = &self.zr[i * r..(i + 1) * r];
        let eta1: f64 = xi.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
        let eta2: f64 = zi.iter().zip(&theta[p..p + r]).map(|(a, b)| a * b).sum();
        (eta1, eta2)
    }

    pub fn obs(&self, theta: &[f64], shape: &Shape, i: usize) -> f64 {
        let (eta1, eta2) = self.eta(theta, i);
        obs_loglik(self.spec.kernel, shape, self.link_y[i], self.log_dq[i], eta1, eta2)
    }

    /// Negative log-likelihood, `+inf` wherever it is not finite.
    pub fn value(&self, theta: &[f64]) -> f64 {
        let shape = self.shape(theta);
        if !shape.shift.is_finite() || !shape.alpha.is_finite() || shape.alpha <= 0.0 {
            return f64::INFINITY;
        }
        let mut total = 0.0;
        for i in 0..self.link_y.len() {
            total += self.obs(theta, &shape, i);
        }
        if total.is_finite() {
            -total
        } else {
            f64::INFINITY
        }
    }
}

/// Negative log-likelihood of either variant at `theta`.
pub fn neg_loglik(theta: &ParamVector, spec: &ModelSpec, y: &[f64]) -> Result<f64> {
    theta.check(spec)?;
    let obj = Objective::new(spec, y)?;
    Ok(obj.value(&theta.to_flat()))
}

/// Negative log-likelihood of the free-shape variant.
pub fn neg_loglik1(theta: &ParamVector, spec: &ModelSpec, y: &[f64]) -> Result<f64> {
    if spec.variant != Variant::Rpgjsb1 {
        return Err(Error::Config("neg_loglik1 needs an rpgjsb1 model".into()));
    }
    neg_loglik(theta, spec, y)
}

/// Negative log-likelihood of the pinned-shape variant.
pub fn neg_loglik2(theta: &ParamVector, spec: &ModelSpec, y: &[f64]) -> Result<f64> {
    if spec.variant != Variant::Rpgjsb2 {
        return Err(Error::Config("neg_loglik2 needs an rpgjsb2 model".into()));
    }
    neg_loglik(theta, spec, y)
}

/// Central-difference gradient of the negative log-likelihood, with the same
/// step rule the optimizer uses.
pub fn neg_loglik_gradient(theta: &ParamVector, spec: &ModelSpec, y: &[f64]) -> Result<Vec<f64>> {
    theta.check(spec)?;
    let obj = Objective::new(spec, y)?;
    Ok(numdiff::gradient(|t| obj.value(t), &theta.to_flat()))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Random restarts after the zero-initialized run (default 100).
    pub max_restarts: usize,
    /// Seeds the restart generator.
    pub seed: u64,
    pub bfgs: BfgsOptions,
    /// Starting point for the first run; zeros when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_restarts: 100,
            seed: 0,
            bfgs: BfgsOptions::default(),
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub variant: Variant,
    pub q: f64,
    pub kernel: KernelFamily,
    pub link: LinkTransform,
    pub param_names: Vec<String>,
    pub theta_hat: ParamVector,
    pub loglik: f64,
    pub observed_info: DMatrix<f64>,
    pub vcov: DMatrix<f64>,
    pub se: Vec<f64>,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    /// Optimizer converged and the observed information is positive definite.
    pub converged: bool,
    /// Random restarts needed before acceptance (0 = accepted from the
    /// initial point).
    pub restarts_used: usize,
    pub iterations: usize,
    /// Fitted `q`-quantile per observation (`psi_i` or `xi_i`).
    pub fitted_quantile: Vec<f64>,
    pub fitted_delta: Vec<f64>,
    pub alpha: f64,
}

impl FitResult {
    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn theta_flat(&self) -> Vec<f64> {
        self.theta_hat.to_flat()
    }

    /// Accepted without any random restart.
    pub fn converged_from_start(&self) -> bool {
        self.converged && self.restarts_used == 0
    }
}

/// `(aic, bic)` from a log-likelihood, parameter count and sample size.
pub fn information_criteria(loglik: f64, dim: usize, n: usize) -> (f64, f64) {
    let k = dim as f64;
    (-2.0 * loglik + 2.0 * k, -2.0 * loglik + (n as f64).ln() * k)
}

pub fn aic_bic(fit: &FitResult) -> (f64, f64) {
    (fit.aic, fit.bic)
}

pub(crate) fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.max();
    max > 0.0 && eig.min() > PD_RELATIVE_FLOOR * max
}

/// Inverse of a symmetric matrix: Cholesky when positive definite, LU otherwise.
pub(crate) fn invert_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        let inv = ch.inverse();
        return Ok((&inv + inv.transpose()) * 0.5);
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("observed information".into()))
}

/// Observed information: the finite-difference Hessian of the negative
/// log-likelihood at `theta_hat`, symmetrized.
pub fn observed_information(theta_hat: &ParamVector, spec: &ModelSpec, y: &[f64]) -> Result<DMatrix<f64>> {
    theta_hat.check(spec)?;
    let obj = Objective::new(spec, y)?;
    let h = numdiff::hessian(|t| obj.value(t), &theta_hat.to_flat(), None);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed information".into()));
    }
    Ok(h)
}

struct Attempt {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    hessian: Option<DMatrix<f64>>,
}

/// Maximum likelihood fit.
///
/// BFGS starts from zeros; the solution is accepted when the optimizer
/// converges and the observed information is positive definite. Otherwise the
/// run is repeated from i.i.d. standard-normal starting points, up to
/// `options.max_restarts` times. When every run fails the best point found is
/// returned with `converged = false`.
pub fn fit(spec: &ModelSpec, y: &[f64], options: &FitOptions) -> Result<FitResult> {
    let obj = Objective::new(spec, y)?;
    let dim = spec.dim();
    let f = |t: &[f64]| obj.value(t);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut start = match &options.start {
        Some(s) if s.len() == dim => s.clone(),
        Some(s) => {
            return Err(Error::Dimension(format!(
                "start has length {}, model needs {dim}",
                s.len()
            )))
        }
        None => vec![0.0; dim],
    };

    let mut best: Option<Attempt> = None;
    let mut total_iterations = 0;
    for attempt in 0..=options.max_restarts {
        let out = optim::minimize(f, &start, &options.bfgs);
        total_iterations += out.iterations;
        if out.converged {
            let h = numdiff::hessian(f, &out.x, Some(out.f));
            if is_positive_definite(&h) {
                let acc = Attempt {
                    x: out.x,
                    f: out.f,
                    iterations: total_iterations,
                    hessian: Some(h),
                };
                return finish(spec, &obj, acc, true, attempt);
            }
        }
        if out.f.is_finite() && best.as_ref().is_none_or(|b| out.f < b.f) {
            best = Some(Attempt {
                x: out.x,
                f: out.f,
                iterations: 0,
                hessian: None,
            });
        }
        start = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    }

    let mut best = best.unwrap_or(Attempt {
        x: vec![0.0; dim],
        f: obj.value(&vec![0.0; dim]),
        iterations: 0,
        hessian: None,
    });
    best.iterations = total_iterations;
    finish(spec, &obj, best, false, options.max_restarts)
}

fn finish(
    spec: &ModelSpec,
    obj: &Objective<'_>,
    attempt: Attempt,
    converged: bool,
    restarts_used: usize,
) -> Result<FitResult> {
    let dim = spec.dim();
    let info = attempt
        .hessian
        .unwrap_or_else(|| numdiff::hessian(|t| obj.value(t), &attempt.x, Some(attempt.f)));
    let vcov = invert_symmetric(&info).unwrap_or_else(|_| DMatrix::from_element(dim, dim, f64::NAN));
    let se = (0..dim)
        .map(|j| {
            let v = vcov[(j, j)];
            if v > 0.0 {
                v.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let theta_hat = ParamVector::from_flat(spec, &attempt.x)?;
    let shape = obj.shape(&attempt.x);
    let (fitted_quantile, fitted_delta) = (0..spec.n())
        .map(|i| {
            let (e1, e2) = obj.eta(&attempt.x, i);
            (spec.link.inverse(e1), e2.exp())
        })
        .unzip();
    let loglik = -attempt.f;
    let (aic, bic) = information_criteria(loglik, dim, spec.n());
    Ok(FitResult {
        variant: spec.variant,
        q: spec.q,
        kernel: spec.kernel,
        link: spec.link,
        param_names: spec.param_names(),
        theta_hat,
        loglik,
        observed_info: info,
        vcov,
        se,
        aic,
        bic,
        n: spec.n(),
        converged,
        restarts_used,
        iterations: attempt.iterations,
        fitted_quantile,
        fitted_delta,
        alpha: shape.alpha,
    })
}

/// One line of a Wald table. Both tail conventions are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t_value: f64,
    /// `1 - Phi(|t|)`
    pub p_one_sided: f64,
    /// `2 (1 - Phi(|t|))`
    pub p_two_sided: f64,
}

impl WaldRow {
    pub fn new(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        let t_value = estimate / se;
        let upper = special::upper_tail_p(t_value.abs());
        Self {
            name: name.into(),
            estimate,
            se,
            t_value,
            p_one_sided: upper,
            p_two_sided: if upper.is_nan() { upper } else { (2.0 * upper).min(1.0) },
        }
    }
}

pub fn wald_table(fit: &FitResult) -> Vec<WaldRow> {
    fit.param_names
        .iter()
        .zip(fit.theta_flat())
        .zip(&fit.se)
        .map(|((name, est), &se)| WaldRow::new(name.clone(), est, se))
        .collect()
}

/// Conditional `p`-quantiles for new covariate rows: one row per observation,
/// one column per level. At `p = q` this is exactly `Q^{-1}(x' beta)`.
pub fn predict_quantile(
    fit: &FitResult,
    spec: &ModelSpec,
    new_x: &DMatrix<f64>,
    new_z: &DMatrix<f64>,
    levels: &[f64],
) -> Result<DMatrix<f64>> {
    for &p in levels {
        check_open_unit("level", p)?;
    }
    if new_x.ncols() != spec.p() || new_z.ncols() != spec.r() || new_x.nrows() != new_z.nrows() {
        return Err(Error::Dimension("new covariate rows do not match the model".into()));
    }
    fit.theta_hat.check(spec)?;
    let beta = nalgebra::DVector::from_column_slice(&fit.theta_hat.beta);
    let nu = nalgebra::DVector::from_column_slice(&fit.theta_hat.nu);
    let eta1 = new_x * beta;
    let eta2 = new_z * nu;
    let (alpha, shift) = match spec.variant {
        Variant::Rpgjsb1 => {
            let a = fit.theta_hat.log_alpha.expect("checked").exp();
            (a, spec.kernel.quantile_log(spec.q.ln() / a))
        }
        Variant::Rpgjsb2 => (alpha_of_q(spec.q)?, 0.0),
    };
    let mut out = DMatrix::zeros(new_x.nrows(), levels.len());
    for i in 0..new_x.nrows() {
        let delta = eta2[i].exp();
        for (k, &p) in levels.iter().enumerate() {
            let u = if p == spec.q {
                eta1[i]
            } else {
                eta1[i] + (spec.kernel.quantile_log(p.ln() / alpha) - shift) / delta
            };
            out[(i, k)] = spec.link.inverse(u);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub q: f64,
    pub variant: Variant,
    pub dim: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub error: Option<String>,
}

/// Fits both variants at every `q` of the grid. Rows come back sorted by `q`
/// (free-shape variant first); failing cells are recorded, not raised.
pub fn quantile_scan(template: &ModelSpec, y: &[f64], q_grid: &[f64], options: &FitOptions) -> Result<Vec<ScanRow>> {
    for &q in q_grid {
        check_open_unit("q", q)?;
    }
    check_response(template, y)?;
    let mut grid = q_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let cells: Vec<(f64, Variant)> = grid
        .iter()
        .flat_map(|&q| Variant::ALL.into_iter().map(move |v| (q, v)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(q, variant)| {
            let spec = ModelSpec {
                variant,
                q,
                ..template.clone()
            };
            let dim = spec.dim();
            match fit(&spec, y, options) {
                Ok(f) => ScanRow {
                    q,
                    variant,
                    dim,
                    loglik: f.loglik,
                    aic: f.aic,
                    bic: f.bic,
                    converged: f.converged,
                    error: (!f.converged).then(|| "did not converge".to_string()),
                },
                Err(e) => ScanRow {
                    q,
                    variant,
                    dim,
                    loglik: f64::NAN,
                    aic: f64::NAN,
                    bic: f64::NAN,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
