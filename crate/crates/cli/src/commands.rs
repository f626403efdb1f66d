//! One function per subcommand, each building a [`Report`].

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use pgjsb::diagnostics::{case_deletion_rc, local_influence, residual_report, InfluenceOptions, Scheme, Target};
use pgjsb::regression::{predict_quantile, quantile_scan, wald_table};
use pgjsb::simulation::{default_truths, run_study, StudyConfig};
use pgjsb::{fit as fit_model, FitOptions, FitResult, KernelFamily, LinkTransform, ModelSpec};
use serde_json::{json, Map, Value as Json};

use crate::data::{design_row, Dataset, Design, Value};
use crate::report::{Cell, Report, Table};
use crate::{CurvesArgs, FitArgs, InfluenceArgs, ModelArgs, Outcome, ScanArgs, SimulateArgs};

struct Prepared {
    x: Design,
    z: Design,
    spec: ModelSpec,
    y: Vec<f64>,
}

fn terms(list: &[String]) -> Vec<String> {
    list.iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn raw_name(term: &str) -> &str {
    term.strip_prefix("log(")
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(term)
        .trim()
}

fn prepare(m: &ModelArgs, q: f64) -> Result<Prepared> {
    let data = Dataset::load(&m.data)?;
    let (qt, st) = (terms(&m.quantile_covariates), terms(&m.scale_covariates));
    let mut used = vec![m.response.as_str()];
    used.extend(qt.iter().chain(&st).map(|t| raw_name(t)));
    data.check_complete(&used)?;
    let y = data.response(&m.response)?;
    let x = data.design(&qt)?;
    let z = data.design(&st)?;
    let spec = ModelSpec::new(m.variant, q, m.kernel, m.link, x.matrix.clone(), z.matrix.clone())?.with_names(
        x.names.iter().map(|n| format!("beta:{n}")).collect(),
        z.names.iter().map(|n| format!("nu:{n}")).collect(),
    )?;
    Ok(Prepared { x, z, spec, y })
}

fn fit_options(m: &ModelArgs, seed: u64) -> FitOptions {
    FitOptions {
        max_restarts: m.max_restarts,
        seed,
        ..FitOptions::default()
    }
}

fn model_config(m: &ModelArgs, seed: u64) -> Map<String, Json> {
    let mut c = Map::new();
    c.insert("data".into(), json!(m.data.display().to_string()));
    c.insert("response".into(), json!(m.response));
    c.insert("quantile_covariates".into(), json!(terms(&m.quantile_covariates)));
    c.insert("scale_covariates".into(), json!(terms(&m.scale_covariates)));
    c.insert("variant".into(), json!(m.variant.name()));
    c.insert("kernel".into(), json!(m.kernel.name()));
    c.insert("link".into(), json!(m.link.name()));
    c.insert("max_restarts".into(), json!(m.max_restarts));
    c.insert("seed".into(), json!(seed));
    c
}

fn fit_config(a: &FitArgs) -> Map<String, Json> {
    let mut c = model_config(&a.model, a.output.seed);
    c.insert("q".into(), json!(a.q));
    c
}

fn coefficient_table(f: &FitResult) -> Table {
    let mut t = Table::new(
        "coefficients",
        &["name", "estimate", "se", "t_value", "p_one_sided", "p_two_sided"],
    );
    for w in wald_table(f) {
        t.push(vec![
            w.name.into(),
            w.estimate.into(),
            w.se.into(),
            w.t_value.into(),
            w.p_one_sided.into(),
            w.p_two_sided.into(),
        ]);
    }
    t
}

fn summary_table(f: &FitResult) -> Table {
    let mut t = Table::new(
        "summary",
        &[
            "variant",
            "q",
            "n",
            "dim",
            "loglik",
            "aic",
            "bic",
            "alpha",
            "converged",
            "restarts",
            "iterations",
        ],
    );
    t.push(vec![
        f.variant.name().into(),
        f.q.into(),
        f.n.into(),
        f.dim().into(),
        f.loglik.into(),
        f.aic.into(),
        f.bic.into(),
        f.alpha.into(),
        f.converged.into(),
        f.restarts_used.into(),
        f.iterations.into(),
    ]);
    t
}

fn fitted(a: &FitArgs) -> Result<(Prepared, FitResult)> {
    let p = prepare(&a.model, a.q)?;
    let f = fit_model(&p.spec, &p.y, &fit_options(&a.model, a.output.seed))?;
    Ok((p, f))
}

pub fn fit(a: &FitArgs) -> Result<Outcome> {
    let (_, f) = fitted(a)?;
    Ok(Outcome {
        report: Report {
            command: "fit".into(),
            config: fit_config(a),
            tables: vec![coefficient_table(&f), summary_table(&f)],
        },
        converged: f.converged,
    })
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("q grid must be lo:hi:step, got '{s}'"))?;
    let [lo, hi, step] = parts[..] else {
        bail!("q grid must be lo:hi:step, got '{s}'");
    };
    if !(step > 0.0) || hi < lo {
        bail!("q grid needs lo <= hi and step > 0, got '{s}'");
    }
    let k = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=k)
        .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

pub fn scan(a: &ScanArgs) -> Result<Outcome> {
    let grid = parse_grid(&a.q_grid)?;
    let p = prepare(&a.model, grid.first().copied().unwrap_or(0.5))?;
    let rows = quantile_scan(&p.spec, &p.y, &grid, &fit_options(&a.model, a.output.seed))?;
    let mut t = Table::new(
        "scan",
        &["q", "variant", "dim", "loglik", "aic", "bic", "converged", "error"],
    );
    for r in &rows {
        t.push(vec![
            r.q.into(),
            r.variant.name().into(),
            r.dim.into(),
            r.loglik.into(),
            r.aic.into(),
            r.bic.into(),
            r.converged.into(),
            r.error.clone().map_or(Cell::Null, Cell::from),
        ]);
    }
    let mut config = model_config(&a.model, a.output.seed);
    config.insert("q_grid".into(), json!(a.q_grid));
    Ok(Outcome {
        report: Report {
            command: "scan".into(),
            config,
            tables: vec![t],
        },
        converged: rows.iter().any(|r| r.converged),
    })
}

pub fn residuals(a: &FitArgs) -> Result<Outcome> {
    let (p, f) = fitted(a)?;
    let mut report = Report {
        command: "residuals".into(),
        config: fit_config(a),
        tables: Vec::new(),
    };
    if !f.converged {
        report.tables.push(summary_table(&f));
        return Ok(Outcome {
            report,
            converged: false,
        });
    }
    let r = residual_report(&f, &p.spec, &p.y)?;
    let mut res = Table::new("residuals", &["index", "y", "fitted_quantile", "residual"]);
    for i in 0..p.y.len() {
        res.push(vec![
            (i + 1).into(),
            p.y[i].into(),
            f.fitted_quantile[i].into(),
            r.residuals[i].into(),
        ]);
    }
    let mut tests = Table::new("tests", &["test", "p_value"]);
    let pv = &r.test_pvalues;
    for (name, v) in [("KS", pv.ks), ("SW", pv.sw), ("AD", pv.ad), ("CVM", pv.cvm)] {
        tests.push(vec![name.into(), v.into()]);
    }
    let mut summary = summary_table(&f);
    summary.columns.push("clamped".into());
    summary.rows[0].push(r.clamped.into());
    report.tables = vec![res, tests, summary];
    Ok(Outcome {
        report,
        converged: true,
    })
}

fn parse_list<T: std::str::FromStr<Err = pgjsb::Error> + Copy>(items: &[String], all: &[T]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for s in terms(items) {
        if s.eq_ignore_ascii_case("all") {
            out.extend_from_slice(all);
        } else {
            out.push(s.parse()?);
        }
    }
    if out.is_empty() {
        out.extend_from_slice(all);
    }
    Ok(out)
}

pub fn influence(a: &InfluenceArgs) -> Result<Outcome> {
    let schemes: Vec<Scheme> = parse_list(&a.scheme, &Scheme::ALL)?;
    let targets: Vec<Target> = parse_list(&a.target, &Target::ALL)?;
    let (p, f) = fitted(&a.fit)?;
    let mut config = fit_config(&a.fit);
    config.insert(
        "scheme".into(),
        json!(schemes.iter().map(|s| s.name()).collect::<Vec<_>>()),
    );
    config.insert(
        "target".into(),
        json!(targets.iter().map(|t| t.name()).collect::<Vec<_>>()),
    );
    config.insert("drop".into(), json!(a.drop));
    config.insert("literal_response_shift".into(), json!(a.literal_response_shift));
    let mut report = Report {
        command: "influence".into(),
        config,
        tables: Vec::new(),
    };
    if !f.converged {
        report.tables.push(summary_table(&f));
        return Ok(Outcome {
            report,
            converged: false,
        });
    }
    let n = p.spec.n();
    if let Some(d) = a.drop {
        if d == 0 || d > n {
            bail!("--drop must be between 1 and {n}, got {d}");
        }
    }
    let opts = InfluenceOptions {
        literal_response_shift: a.literal_response_shift,
    };
    let mut curv = Table::new(
        "curvature",
        &["scheme", "target", "index", "c", "threshold", "flagged", "d_max"],
    );
    let mut summary = Table::new(
        "influence_summary",
        &["scheme", "target", "lambda_max", "c_max", "threshold", "n_flagged"],
    );
    for &s in &schemes {
        for &t in &targets {
            let r = local_influence(&f, &p.spec, &p.y, s, t, &opts)?;
            for i in 0..n {
                curv.push(vec![
                    s.name().into(),
                    t.name().into(),
                    (i + 1).into(),
                    r.c[i].into(),
                    r.threshold.into(),
                    r.flagged.contains(&i).into(),
                    r.d_max[i].into(),
                ]);
            }
            summary.push(vec![
                s.name().into(),
                t.name().into(),
                r.lambda_max.into(),
                (2.0 * r.lambda_max).into(),
                r.threshold.into(),
                r.flagged.len().into(),
            ]);
        }
    }
    report.tables = vec![curv, summary];
    if let Some(d) = a.drop {
        let del = case_deletion_rc(&f, &p.spec, &p.y, d - 1, &fit_options(&a.fit.model, a.fit.output.seed))
            .with_context(|| format!("refit without observation {d}"))?;
        let mut t = Table::new(
            "deletion",
            &[
                "dropped",
                "name",
                "full_estimate",
                "reduced_estimate",
                "rc_percent",
                "rcse_percent",
                "absolute",
                "p_one_sided",
                "p_two_sided",
            ],
        );
        for r in del.rows {
            t.push(vec![
                d.into(),
                r.name.into(),
                r.full_estimate.into(),
                r.reduced_estimate.into(),
                r.rc_percent.into(),
                r.rcse_percent.into(),
                r.absolute.into(),
                r.p_one_sided.into(),
                r.p_two_sided.into(),
            ]);
        }
        report.tables.push(t);
    }
    Ok(Outcome {
        report,
        converged: true,
    })
}

/// Design row for prediction from `TERM=VALUE` assignments.
fn prediction_row(design: &Design, at: &[(String, String)], sweep: (&str, f64)) -> Result<Vec<f64>> {
    design_row(&design.terms, |t| {
        if t.label == sweep.0 {
            return Value::Term(sweep.1);
        }
        match at.iter().find(|(k, _)| *k == t.label) {
            Some((_, v)) => match v.parse::<f64>() {
                Ok(x) => Value::Term(x),
                Err(_) => Value::Level(v),
            },
            None => Design::default_value(t),
        }
    })
}

pub fn curves(a: &CurvesArgs) -> Result<Outcome> {
    let [term, lo, hi, steps] = &a.sweep[..] else {
        bail!("--sweep takes TERM LO HI STEPS");
    };
    let lo: f64 = lo
        .parse()
        .map_err(|_| anyhow!("--sweep LO must be a number, got '{lo}'"))?;
    let hi: f64 = hi
        .parse()
        .map_err(|_| anyhow!("--sweep HI must be a number, got '{hi}'"))?;
    let steps: usize = steps
        .parse()
        .map_err(|_| anyhow!("--sweep STEPS must be a count, got '{steps}'"))?;
    if steps == 0 || !lo.is_finite() || !hi.is_finite() {
        bail!("--sweep needs finite bounds and at least one step");
    }
    if a.levels.is_empty() || a.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        bail!("--levels must lie strictly inside (0,1)");
    }
    let at: Vec<(String, String)> =
        a.at.iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| anyhow!("--at takes TERM=VALUE, got '{s}'"))
            })
            .collect::<Result<_>>()?;
    let (p, f) = fitted(&a.fit)?;
    let known = |name: &str| p.x.terms.iter().chain(&p.z.terms).any(|t| t.label == name);
    if !known(term) {
        bail!("unknown sweep term '{term}'; it must appear in the covariate lists");
    }
    for (k, _) in &at {
        if !known(k) {
            bail!("unknown term '{k}' in --at");
        }
    }
    let mut config = fit_config(&a.fit);
    config.insert("levels".into(), json!(a.levels));
    config.insert(
        "sweep".into(),
        json!({"term": term, "lo": lo, "hi": hi, "steps": steps}),
    );
    config.insert("at".into(), json!(a.at));
    let mut report = Report {
        command: "curves".into(),
        config,
        tables: Vec::new(),
    };
    if !f.converged {
        report.tables.push(summary_table(&f));
        return Ok(Outcome {
            report,
            converged: false,
        });
    }
    let values: Vec<f64> = (0..steps)
        .map(|k| {
            if steps == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let rows = |d: &Design| -> Result<DMatrix<f64>> {
        let r = values
            .iter()
            .map(|&v| prediction_row(d, &at, (term, v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(r.len(), d.names.len(), |i, j| r[i][j]))
    };
    let (nx, nz) = (rows(&p.x)?, rows(&p.z)?);
    let pred = predict_quantile(&f, &p.spec, &nx, &nz, &a.levels)?;
    let mut t = Table::new("curves", &["sweep_value", "level", "quantile"]);
    for (i, &v) in values.iter().enumerate() {
        for (k, &l) in a.levels.iter().enumerate() {
            t.push(vec![v.into(), l.into(), pred[(i, k)].into()]);
        }
    }
    report.tables = vec![t, summary_table(&f)];
    Ok(Outcome {
        report,
        converged: true,
    })
}

fn parse_cell(s: &str) -> Result<(KernelFamily, LinkTransform, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [k, l, q] = parts[..] else {
        bail!("--cell takes kernel,link,q, got '{s}'");
    };
    let q: f64 = q
        .parse()
        .map_err(|_| anyhow!("--cell quantile must be a number, got '{q}'"))?;
    Ok((k.parse()?, l.parse()?, q))
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let mut cells: Vec<(KernelFamily, LinkTransform, f64)> =
        a.cell.iter().map(|s| parse_cell(s)).collect::<Result<_>>()?;
    if a.all_paper_cells {
        cells.extend(default_truths().into_iter().map(|t| (t.kernel, t.link, t.q)));
    }
    if cells.is_empty() {
        bail!("give at least one --cell or --all-paper-cells");
    }
    if a.n.is_empty() || a.reps == 0 {
        bail!("--n and --reps must be positive");
    }
    let mut params = Table::new(
        "recovery",
        &[
            "kernel",
            "link",
            "q",
            "n",
            "parameter",
            "truth",
            "mean",
            "bias",
            "se1",
            "se2",
            "cp",
        ],
    );
    let mut conv = Table::new(
        "convergence",
        &[
            "kernel",
            "link",
            "q",
            "n",
            "replicates",
            "used",
            "failed",
            "rate_from_zero",
            "se1_missing",
        ],
    );
    for &(kernel, link, q) in &cells {
        for &n in &a.n {
            let cfg = StudyConfig {
                max_restarts: a.max_restarts,
                ..StudyConfig::paper_cell(kernel, link, q, n, a.reps, a.output.seed)?
            };
            let r = run_study(&cfg)?;
            let key = || -> Vec<Cell> { vec![kernel.name().into(), link.name().into(), q.into(), n.into()] };
            for s in &r.params {
                let mut row = key();
                row.extend([
                    s.name.clone().into(),
                    s.truth.into(),
                    s.mean.into(),
                    s.bias.into(),
                    s.se1.into(),
                    s.se2.into(),
                    s.cp.into(),
                ]);
                params.push(row);
            }
            let mut row = key();
            row.extend([
                a.reps.into(),
                r.replicates_used.into(),
                r.replicates_failed.into(),
                r.convergence_from_zero_rate.into(),
                r.se1_missing.into(),
            ]);
            conv.push(row);
        }
    }
    let mut config = Map::new();
    config.insert(
        "cells".into(),
        json!(cells
            .iter()
            .map(|(k, l, q)| format!("{},{},{}", k.name(), l.name(), q))
            .collect::<Vec<_>>()),
    );
    config.insert("n".into(), json!(a.n));
    config.insert("reps".into(), json!(a.reps));
    config.insert("max_restarts".into(), json!(a.max_restarts));
    config.insert("seed".into(), json!(a.output.seed));
    Ok(Outcome {
        report: Report {
            command: "simulate".into(),
            config,
            tables: vec![params, conv],
        },
        converged: true,
    })
}
