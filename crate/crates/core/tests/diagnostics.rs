mod common;

use common::richardson_gradient;
use nalgebra::{DMatrix, DVector};
use pgjsb::diagnostics::normality::{kolmogorov_smirnov, shapiro_wilk};
use pgjsb::diagnostics::{
    case_deletion_rc, curvature_matrix, local_influence, normality_tests, perturbation_nabla, relative_change_table,
    rqr, InfluenceOptions, Scheme, Target,
};
use pgjsb::distribution::cdf1;
use pgjsb::regression::neg_loglik;
use pgjsb::simulation::{simulate_dataset, StudyConfig};
use pgjsb::special::norm_quantile;
use pgjsb::{fit, FitOptions, FitResult, KernelFamily, LinkTransform, ModelSpec, ParamVector, Rpgjsb1Params, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const OPTS: InfluenceOptions = InfluenceOptions {
    literal_response_shift: false,
};

fn cell(n: usize, seed: u64) -> StudyConfig {
    StudyConfig::paper_cell(KernelFamily::Logistic, LinkTransform::Logit, 0.5, n, 1, seed).unwrap()
}

fn fitted(n: usize, seed: u64) -> (ModelSpec, Vec<f64>, FitResult) {
    let cfg = cell(n, seed);
    let (x, z, y) = simulate_dataset(&cfg, 0).unwrap();
    let spec = ModelSpec::new(Variant::Rpgjsb1, cfg.q, cfg.kernel, cfg.link, x, z).unwrap();
    let f = fit(&spec, &y, &FitOptions::default()).unwrap();
    assert!(f.converged);
    (spec, y, f)
}

/// A fit object moved to arbitrary parameters (for transforms that only read
/// the parameter values).
fn at(f: &FitResult, theta: ParamVector) -> FitResult {
    FitResult {
        theta_hat: theta,
        ..f.clone()
    }
}

#[test]
fn case_weight_nabla_is_the_score_matrix() {
    let (spec, y, f) = fitted(60, 4);
    let nabla = perturbation_nabla(&f, &spec, &y, Scheme::CaseWeight, &OPTS).unwrap();
    let all: Vec<usize> = (0..spec.n()).collect();
    for i in 0..spec.n() {
        // log f_i = nll(without i) - nll(all)
        let keep: Vec<usize> = all.iter().copied().filter(|&k| k != i).collect();
        let reduced = spec.select_rows(&keep).unwrap();
        let y_red: Vec<f64> = keep.iter().map(|&k| y[k]).collect();
        let li = |t: &[f64]| {
            neg_loglik(&ParamVector::from_flat(&reduced, t).unwrap(), &reduced, &y_red).unwrap()
                - neg_loglik(&ParamVector::from_flat(&spec, t).unwrap(), &spec, &y).unwrap()
        };
        let score = richardson_gradient(li, &f.theta_flat(), 0.01);
        for j in 0..f.dim() {
            assert!(
                (nabla[(j, i)] - score[j]).abs() < 1e-4 * (1.0 + score[j].abs()),
                "case {i}, param {j}"
            );
        }
    }
    let sums = nabla.column_sum();
    assert!(sums.amax() < 1e-3, "{sums}");
}

#[test]
fn predictor_scheme_at_zero_predictors_reduces_to_scores() {
    // d/dw l(w x'b) = l' x'b vanishes at b = 0, but its b-derivative is l' x,
    // i.e. the case score; the shape row has nothing to differentiate
    let (spec, y, f) = fitted(50, 5);
    let zero = at(&f, ParamVector::new(vec![0.0; 2], vec![0.0; 2], Some(0.3)));
    let pred = perturbation_nabla(&zero, &spec, &y, Scheme::Predictor, &OPTS).unwrap();
    let score = perturbation_nabla(&zero, &spec, &y, Scheme::CaseWeight, &OPTS).unwrap();
    for i in 0..spec.n() {
        for j in 0..4 {
            assert!(
                (pred[(j, i)] - score[(j, i)]).abs() < 1e-4 * (1.0 + score[(j, i)].abs()),
                "({j},{i})"
            );
        }
        assert!(pred[(4, i)].abs() < 1e-6);
    }
}

#[test]
fn duplicated_rows_have_equal_curvature() {
    let cfg = cell(60, 6);
    let (x, z, mut y) = simulate_dataset(&cfg, 0).unwrap();
    let rows: Vec<usize> = (0..60).chain([7]).collect();
    y.push(y[7]);
    let spec = ModelSpec::new(
        Variant::Rpgjsb1,
        0.5,
        cfg.kernel,
        cfg.link,
        x.select_rows(&rows),
        z.select_rows(&rows),
    )
    .unwrap();
    let f = fit(&spec, &y, &FitOptions::default()).unwrap();
    assert!(f.converged);
    for scheme in Scheme::ALL {
        for target in Target::ALL {
            let rep = local_influence(&f, &spec, &y, scheme, target, &OPTS).unwrap();
            let scale = rep.c.iter().fold(0f64, |m, v| m.max(*v));
            assert!(
                (rep.c[7] - rep.c[60]).abs() <= 1e-8 * scale.max(1.0),
                "{scheme} {target}"
            );
        }
    }
}

#[test]
fn curvature_is_positive_semidefinite_and_consistent() {
    let (spec, y, f) = fitted(80, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for scheme in Scheme::ALL {
        for target in Target::ALL {
            let b = curvature_matrix(&f, &spec, &y, scheme, target, &OPTS).unwrap();
            let eig = b.clone().symmetric_eigen().eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            assert!(lo >= -1e-8 * hi, "{scheme} {target}: {lo} vs {hi}");

            let rep = local_influence(&f, &spec, &y, scheme, target, &OPTS).unwrap();
            assert!(rep.c.iter().all(|&c| c >= 0.0));
            for i in 0..spec.n() {
                assert!((rep.c[i] - 2.0 * b[(i, i)]).abs() <= 1e-9 * hi.max(1e-300) + 1e-12);
            }
            let mean = rep.c.iter().sum::<f64>() / spec.n() as f64;
            assert_eq!(rep.threshold, 2.0 * rep.c.iter().sum::<f64>() / spec.n() as f64);
            assert!((rep.threshold - 2.0 * mean).abs() <= 1e-15 * rep.threshold);
            let expected: Vec<usize> = (0..spec.n()).filter(|&i| rep.c[i] > rep.threshold).collect();
            assert_eq!(rep.flagged, expected);

            // variational characterization of the top eigenvector
            let d = DVector::from_column_slice(&rep.d_max);
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let c_dmax = 2.0 * d.dot(&(&b * &d));
            assert!((c_dmax - 2.0 * hi).abs() <= 1e-6 * (2.0 * hi).max(1e-300));
            assert!((rep.lambda_max - hi).abs() <= 1e-8 * hi.max(1e-300));
            for _ in 0..1000 {
                let mut v = DVector::from_fn(spec.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
                v /= v.norm();
                assert!(2.0 * v.dot(&(&b * &v)).abs() <= c_dmax * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn theta_report_equals_beta_report_without_scale_block() {
    let cfg = cell(80, 8);
    let (x, _, y) = simulate_dataset(&cfg, 0).unwrap();
    let spec = ModelSpec::new(Variant::Rpgjsb2, 0.5, cfg.kernel, cfg.link, x, DMatrix::zeros(80, 0)).unwrap();
    let f = fit(&spec, &y, &FitOptions::default()).unwrap();
    assert!(f.converged);
    for scheme in Scheme::ALL {
        let th = local_influence(&f, &spec, &y, scheme, Target::Theta, &OPTS).unwrap();
        let be = local_influence(&f, &spec, &y, scheme, Target::Beta, &OPTS).unwrap();
        for (a, b) in th.c.iter().zip(&be.c) {
            assert!((a - b).abs() <= 1e-10 * th.threshold.max(1e-300));
        }
        assert_eq!(th.flagged, be.flagged);
    }
}

#[test]
fn literal_response_reading_only_matters_for_free_shape() {
    let (spec, y, f) = fitted(60, 9);
    let literal = InfluenceOptions {
        literal_response_shift: true,
    };
    let a = perturbation_nabla(&f, &spec, &y, Scheme::Response, &OPTS).unwrap();
    let b = perturbation_nabla(&f, &spec, &y, Scheme::Response, &literal).unwrap();
    assert!((&a - &b).amax() > 1e-6);

    let spec2 = spec.with_variant(Variant::Rpgjsb2);
    let f2 = fit(&spec2, &y, &FitOptions::default()).unwrap();
    let a = perturbation_nabla(&f2, &spec2, &y, Scheme::Response, &OPTS).unwrap();
    let b = perturbation_nabla(&f2, &spec2, &y, Scheme::Response, &literal).unwrap();
    assert_eq!(a, b);
}

#[test]
fn relative_changes_vanish_on_refit_of_the_same_data() {
    let (spec, y, f) = fitted(100, 10);
    let again = fit(
        &spec,
        &y,
        &FitOptions {
            start: Some(f.theta_flat()),
            ..FitOptions::default()
        },
    )
    .unwrap();
    for row in relative_change_table(&f, &again).unwrap() {
        assert!(row.rc_percent < 1e-4 && row.rcse_percent < 1e-4, "{row:?}");
        assert!(!row.absolute);
    }
    let del = case_deletion_rc(&f, &spec, &y, 3, &FitOptions::default()).unwrap();
    assert_eq!(del.dropped, 3);
    assert_eq!(del.reduced_fit.n, 99);
    assert!(del.rows.iter().any(|r| r.rc_percent > 0.0));
    assert!(case_deletion_rc(&f, &spec, &y, 100, &FitOptions::default()).is_err());
}

#[test]
fn zero_estimate_gives_absolute_change() {
    let (_, _, f) = fitted(60, 11);
    let mut zeroed = f.clone();
    zeroed.theta_hat.beta[1] = 0.0;
    let rows = relative_change_table(&zeroed, &f).unwrap();
    assert!(rows[1].absolute);
    assert!((rows[1].rc_percent - f.theta_hat.beta[1].abs()).abs() < 1e-15);
    assert!(rows[1].rc_percent.is_finite());
    assert!(!rows[0].absolute);
}

#[test]
fn planted_outlier_moves_scale_more_than_quantile() {
    let mut scale_wins = 0;
    let mut flagged = 0;
    let reps = 40;
    for rep in 0..reps {
        let cfg = cell(100, 1000 + rep);
        let (x, z, mut y) = simulate_dataset(&cfg, 0).unwrap();
        let t = &cfg.truth;
        let p = Rpgjsb1Params::new(
            LinkTransform::Logit.inverse(t.beta[0] + t.beta[1] * x[(0, 1)]),
            (t.nu[0] + t.nu[1] * x[(0, 1)]).exp(),
            t.log_alpha.unwrap().exp(),
            0.5,
            cfg.kernel,
            cfg.link,
        )
        .unwrap();
        y[0] = p.quantile(0.999).unwrap();
        let spec = ModelSpec::new(Variant::Rpgjsb1, 0.5, cfg.kernel, cfg.link, x, z).unwrap();
        let f = fit(&spec, &y, &FitOptions::default()).unwrap();
        assert!(f.converged);
        let rep = local_influence(&f, &spec, &y, Scheme::CaseWeight, Target::Theta, &OPTS).unwrap();
        flagged += rep.flagged.contains(&0) as usize;
        let del = case_deletion_rc(&f, &spec, &y, 0, &FitOptions::default()).unwrap();
        let rc = |a: usize, b: usize| del.rows[a..b].iter().map(|r| r.rc_percent).sum::<f64>();
        if rc(2, 4) > rc(0, 2) {
            scale_wins += 1;
        }
    }
    assert!(flagged as f64 >= 0.9 * reps as f64, "{flagged}/{reps}");
    assert!(scale_wins * 2 > reps as usize, "{scale_wins}/{reps}");
}

#[test]
fn residuals_in_the_uniform_case_are_normal_scores() {
    let (spec, y, f) = fitted(60, 12);
    let x = DMatrix::from_element(spec.n(), 1, 1.0);
    let one = ModelSpec::new(
        Variant::Rpgjsb1,
        0.5,
        KernelFamily::Logistic,
        LinkTransform::Logit,
        x.clone(),
        x,
    )
    .unwrap();
    let uniform = at(&f, ParamVector::new(vec![0.0], vec![0.0], Some(0.0)));
    let mut ys = y.clone();
    ys[0] = 0.975;
    let (r, clamped) = rqr(&uniform, &one, &ys).unwrap();
    assert_eq!(clamped, 0);
    assert!((r[0] - 1.959964).abs() < 1e-6);
    for (ri, yi) in r.iter().zip(&ys) {
        assert!((ri - norm_quantile(*yi)).abs() < 1e-9);
    }

    // an observation sitting on its fitted median has a zero residual
    let mut at_median = y.clone();
    at_median[5] = f.fitted_quantile[5];
    let (r, _) = rqr(&f, &spec, &at_median).unwrap();
    assert!(r[5].abs() < 1e-9);

    let mut broken = f.clone();
    broken.converged = false;
    assert!(rqr(&broken, &spec, &y).is_err());
}

#[test]
fn residuals_match_distribution_cdf() {
    let (spec, y, f) = fitted(40, 13);
    let (r, _) = rqr(&f, &spec, &y).unwrap();
    let th = &f.theta_hat;
    for i in 0..spec.n() {
        let eta1 = th.beta[0] + th.beta[1] * spec.x()[(i, 1)];
        let eta2 = th.nu[0] + th.nu[1] * spec.z()[(i, 1)];
        let p = Rpgjsb1Params::new(
            LinkTransform::Logit.inverse(eta1),
            eta2.exp(),
            th.log_alpha.unwrap().exp(),
            0.5,
            spec.kernel,
            spec.link,
        )
        .unwrap();
        let u = cdf1(y[i], &p).unwrap();
        assert!((r[i] - norm_quantile(u)).abs() < 1e-8, "case {i}");
    }
}

#[test]
fn residuals_at_the_true_parameters_are_calibrated() {
    let (_, _, template) = fitted(60, 14);
    let mut rejected = 0;
    let reps = 1000;
    for rep in 0..reps {
        let cfg = cell(200, 20_000 + rep);
        let (x, z, y) = simulate_dataset(&cfg, 0).unwrap();
        let spec = ModelSpec::new(Variant::Rpgjsb1, 0.5, cfg.kernel, cfg.link, x, z).unwrap();
        let truth = at(&template, cfg.truth.clone());
        let (r, _) = rqr(&truth, &spec, &y).unwrap();
        rejected += (kolmogorov_smirnov(&r).unwrap().p_value < 0.05) as usize;
    }
    let rate = rejected as f64 / reps as f64;
    assert!((0.03..=0.07).contains(&rate), "{rate}");
}

fn normal_sample(rng: &mut ChaCha8Rng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[test]
fn normality_tests_are_calibrated_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rejections = [0usize; 4];
    let sims = 2000;
    for _ in 0..sims {
        let p = normality_tests(&normal_sample(&mut rng, 200, 0.0, 1.0)).unwrap();
        for (k, v) in [p.ks, p.sw, p.ad, p.cvm].into_iter().enumerate() {
            assert!((0.0..=1.0).contains(&v));
            rejections[k] += (v < 0.05) as usize;
        }
    }
    for (k, r) in rejections.iter().enumerate() {
        let rate = *r as f64 / sims as f64;
        assert!((0.03..=0.07).contains(&rate), "test {k}: {rate}");
    }
}

#[test]
fn simple_null_tests_see_the_wrong_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut ks, mut sw, mut ad, mut cvm) = (0, 0, 0, 0);
    let sims = 500;
    for _ in 0..sims {
        let p = normality_tests(&normal_sample(&mut rng, 500, 0.0, 2.0)).unwrap();
        ks += (p.ks < 0.05) as usize;
        sw += (p.sw < 0.05) as usize;
        ad += (p.ad < 0.05) as usize;
        cvm += (p.cvm < 0.05) as usize;
    }
    for simple in [ks, ad, cvm] {
        assert!(simple as f64 - sw as f64 > 0.5 * sims as f64, "{simple} vs {sw}");
    }
}

#[test]
fn normality_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shifted = normal_sample(&mut rng, 200, 2.0, 1.0);
    assert!(kolmogorov_smirnov(&shifted).unwrap().p_value < 1e-3);
    assert!(shapiro_wilk(&[0.3; 20]).is_err());
    assert!(normality_tests(&[0.1, 0.2, 0.3]).is_err());
}
