//! Monte Carlo recovery studies.
//!
//! Each replicate draws fresh covariates from a uniform law, samples responses
//! from the configured model with `X = Z = [1, x]`, and refits from zero. Every
//! replicate owns a ChaCha stream selected by its index, so results do not
//! depend on scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Pgjsb;
use crate::error::{check_open_unit, Error, Result};
use crate::kernel::{KernelFamily, LinkTransform};
use crate::regression::{fit, FitOptions, ModelSpec, ParamVector, Variant};

/// Covariate range used by the published recovery study.
pub const COVARIATE_LAW: (f64, f64) = (-5.478, -2.305);

/// Two-sided 95% normal quantile used for coverage.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub kernel: KernelFamily,
    pub link: LinkTransform,
    pub q: f64,
    pub truth: ParamVector,
}

/// The twelve true-parameter rows of the published study
/// (free-shape variant, `beta = (b0, b1)`, `nu = (v0, v1)`, `log alpha`).
pub fn default_truths() -> Vec<TruthRow> {
    use KernelFamily::{Logistic, Normal};
    use LinkTransform::{Logit, Loglog};
    #[rustfmt::skip]
    let rows: [(KernelFamily, LinkTransform, f64, [f64; 5]); 12] = [
        (Logistic, Logit,  0.1, [4.9, 2.6, 2.2, 0.4, -0.7]),
        (Logistic, Logit,  0.5, [4.8, 2.1, 2.2, 0.4, -0.7]),
        (Logistic, Logit,  0.9, [4.7, 1.8, 2.2, 0.4, -0.7]),
        (Logistic, Loglog, 0.1, [1.3, 0.8, 0.8, -0.3, 0.1]),
        (Logistic, Loglog, 0.5, [2.1, 0.9, 1.0, -0.2, 0.1]),
        (Logistic, Loglog, 0.9, [2.8, 1.0, 1.1, -0.2, 0.1]),
        (Normal,   Logit,  0.1, [4.4, 2.4, 1.5, 0.3, -1.4]),
        (Normal,   Logit,  0.5, [4.6, 2.1, 1.5, 0.3, -1.4]),
        (Normal,   Logit,  0.9, [4.8, 1.9, 1.5, 0.3, -1.4]),
        (Normal,   Loglog, 0.1, [1.2, 0.7, -0.1, -0.3, 1.1]),
        (Normal,   Loglog, 0.5, [2.0, 0.9, 0.0, -0.3, 1.0]),
        (Normal,   Loglog, 0.9, [2.8, 1.0, 0.1, -0.2, 1.0]),
    ];
    rows.iter()
        .map(|&(kernel, link, q, t)| TruthRow {
            kernel,
            link,
            q,
            truth: ParamVector::new(vec![t[0], t[1]], vec![t[2], t[3]], Some(t[4])),
        })
        .collect()
}

/// Truth for one published cell, if it exists.
pub fn paper_truth(kernel: KernelFamily, link: LinkTransform, q: f64) -> Option<ParamVector> {
    default_truths()
        .into_iter()
        .find(|r| r.kernel == kernel && r.link == link && (r.q - q).abs() < 1e-12)
        .map(|r| r.truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub variant: Variant,
    pub kernel: KernelFamily,
    pub link: LinkTransform,
    pub q: f64,
    pub n: usize,
    pub replicates: usize,
    pub truth: ParamVector,
    pub covariate_law: (f64, f64),
    pub seed: u64,
    /// Worker cap; `None` uses the global pool.
    pub parallel_workers: Option<usize>,
    /// Random restarts allowed per replicate fit.
    pub max_restarts: usize,
}

impl StudyConfig {
    /// A published cell with the free-shape variant and the published
    /// covariate law.
    pub fn paper_cell(
        kernel: KernelFamily,
        link: LinkTransform,
        q: f64,
        n: usize,
        replicates: usize,
        seed: u64,
    ) -> Result<Self> {
        let truth = paper_truth(kernel, link, q)
            .ok_or_else(|| Error::Config(format!("no published truth for ({kernel}, {link}, q={q})")))?;
        let cfg = Self {
            variant: Variant::Rpgjsb1,
            kernel,
            link,
            q,
            n,
            replicates,
            truth,
            covariate_law: COVARIATE_LAW,
            seed,
            parallel_workers: None,
            max_restarts: FitOptions::default().max_restarts,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("q", self.q)?;
        let (lo, hi) = self.covariate_law;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("covariate law needs lo < hi, got ({lo}, {hi})")));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n < 5 {
            return Err(Error::Config(format!("n = {} is too small for a 2+2 design", self.n)));
        }
        let t = &self.truth;
        let shape_ok = t.log_alpha.is_some() == (self.variant == Variant::Rpgjsb1);
        if t.beta.len() != 2 || t.nu.len() != 2 || !shape_ok {
            return Err(Error::Dimension(
                "truth must have two quantile and two scale coefficients (plus log alpha for rpgjsb1)".into(),
            ));
        }
        if t.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("truth has non-finite entries".into()));
        }
        Ok(())
    }

    fn rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        rng
    }
}

/// Draws one replicate's design and responses; deterministic in
/// `(config.seed, replicate)`.
pub fn simulate_dataset(config: &StudyConfig, replicate: u64) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> {
    config.validate()?;
    let mut rng = config.rng(replicate);
    let (lo, hi) = config.covariate_law;
    let law = Uniform::new(lo, hi).map_err(|e| Error::Config(e.to_string()))?;
    let xs: Vec<f64> = (0..config.n).map(|_| law.sample(&mut rng)).collect();
    let design = DMatrix::from_fn(config.n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
    let y = sample_responses(config, &xs, &mut rng);
    Ok((design.clone(), design, y))
}

fn sample_responses<R: Rng>(config: &StudyConfig, xs: &[f64], rng: &mut R) -> Vec<f64> {
    let t = &config.truth;
    let (alpha, shift) = match config.variant {
        Variant::Rpgjsb1 => {
            let a = t.log_alpha.expect("validated").exp();
            (a, config.kernel.quantile_log(config.q.ln() / a))
        }
        Variant::Rpgjsb2 => (-config.q.log2(), 0.0),
    };
    xs.iter()
        .map(|&x| {
            let d = Pgjsb {
                kernel: config.kernel,
                link: config.link,
                location: t.beta[0] + t.beta[1] * x,
                delta: (t.nu[0] + t.nu[1] * x).exp(),
                alpha,
                shift,
            };
            let u: f64 = Open01.sample(rng);
            config.link.inverse(d.quantile_link(u))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Monte Carlo standard deviation; `None` with fewer than two usable
    /// replicates.
    pub se1: Option<f64>,
    /// Mean estimated standard error.
    pub se2: f64,
    /// Wald 95% coverage.
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub params: Vec<ParamSummary>,
    /// Share of all replicates accepted from the zero start without restarts.
    pub convergence_from_zero_rate: f64,
    pub replicates_used: usize,
    pub replicates_failed: usize,
    pub se1_missing: bool,
}

struct ReplicateOutcome {
    theta: Vec<f64>,
    se: Vec<f64>,
    from_zero: bool,
}

fn run_replicate(config: &StudyConfig, idx: u64) -> Option<ReplicateOutcome> {
    let (x, z, y) = simulate_dataset(config, idx).ok()?;
    let spec = ModelSpec::new(config.variant, config.q, config.kernel, config.link, x, z).ok()?;
    let options = FitOptions {
        max_restarts: config.max_restarts,
        seed: config.seed ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..FitOptions::default()
    };
    let f = fit(&spec, &y, &options).ok()?;
    Some(ReplicateOutcome {
        from_zero: f.converged_from_start(),
        theta: f.theta_flat(),
        se: if f.converged { f.se } else { Vec::new() },
    })
}

/// Runs every replicate and aggregates bias, SE1, SE2 and coverage over the
/// converged ones.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let work = || -> Vec<Option<ReplicateOutcome>> {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|i| run_replicate(config, i))
            .collect()
    };
    let outcomes = match config.parallel_workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };

    let from_zero = outcomes
        .iter()
        .filter(|o| o.as_ref().is_some_and(|o| o.from_zero))
        .count();
    let used: Vec<&ReplicateOutcome> = outcomes.iter().flatten().filter(|o| !o.se.is_empty()).collect();
    let truth = config.truth.to_flat();
    let names = {
        let mut v = vec!["beta0".to_string(), "beta1".into(), "nu0".into(), "nu1".into()];
        if config.variant == Variant::Rpgjsb1 {
            v.push("log_alpha".into());
        }
        v
    };
    let m = used.len() as f64;
    let params = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let mean = used.iter().map(|o| o.theta[j]).sum::<f64>() / m;
            let se1 = (used.len() >= 2).then(|| {
                let ss: f64 = used.iter().map(|o| (o.theta[j] - mean).powi(2)).sum();
                (ss / (m - 1.0)).sqrt()
            });
            let se2 = used.iter().map(|o| o.se[j]).sum::<f64>() / m;
            let covered = used
                .iter()
                .filter(|o| (o.theta[j] - truth[j]).abs() <= Z_975 * o.se[j])
                .count();
            ParamSummary {
                name,
                truth: truth[j],
                mean,
                bias: mean - truth[j],
                se1,
                se2,
                cp: covered as f64 / m,
            }
        })
        .collect();
    Ok(StudyReport {
        config: config.clone(),
        params,
        convergence_from_zero_rate: from_zero as f64 / config.replicates as f64,
        replicates_used: used.len(),
        replicates_failed: config.replicates - used.len(),
        se1_missing: used.len() < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let t = default_truths();
        assert_eq!(t.len(), 12);
        let first = paper_truth(KernelFamily::Logistic, LinkTransform::Logit, 0.1).unwrap();
        assert_eq!(first, ParamVector::new(vec![4.9, 2.6], vec![2.2, 0.4], Some(-0.7)));
        let last = paper_truth(KernelFamily::Normal, LinkTransform::Loglog, 0.9).unwrap();
        assert_eq!(last, ParamVector::new(vec![2.8, 1.0], vec![0.1, -0.2], Some(1.0)));
        let mid = paper_truth(KernelFamily::Normal, LinkTransform::Logit, 0.5).unwrap();
        assert_eq!(mid, ParamVector::new(vec![4.6, 2.1], vec![1.5, 0.3], Some(-1.4)));
        assert!(paper_truth(KernelFamily::Cauchy, LinkTransform::Logit, 0.5).is_none());
    }

    #[test]
    fn datasets_are_deterministic_and_in_support() {
        let cfg = StudyConfig::paper_cell(KernelFamily::Logistic, LinkTransform::Logit, 0.5, 300, 1, 7).unwrap();
        let a = simulate_dataset(&cfg, 3).unwrap();
        let b = simulate_dataset(&cfg, 3).unwrap();
        let c = simulate_dataset(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.2, c.2);
        assert!(a.2.iter().all(|&y| y > 0.0 && y < 1.0));
        let (lo, hi) = COVARIATE_LAW;
        assert!(a.0.column(1).iter().all(|&x| x >= lo && x < hi));
    }

    #[test]
    fn config_validation() {
        let mut cfg = StudyConfig::paper_cell(KernelFamily::Normal, LinkTransform::Logit, 0.1, 50, 2, 1).unwrap();
        cfg.covariate_law = (1.0, 1.0);
        assert!(cfg.validate().is_err());
        cfg.covariate_law = COVARIATE_LAW;
        cfg.replicates = 0;
        assert!(cfg.validate().is_err());
        cfg.replicates = 1;
        cfg.variant = Variant::Rpgjsb2;
        assert!(cfg.validate().is_err());
        assert!(StudyConfig::paper_cell(KernelFamily::Normal, LinkTransform::Logit, 0.3, 50, 2, 1).is_err());
    }
}
