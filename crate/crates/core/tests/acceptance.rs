//! Acceptance suite: one PASS/FAIL line per criterion and a summary line.
//!
//! Exits non-zero only with `DWGAM_ACCEPTANCE_STRICT=1`, so a red criterion
//! does not stop `cargo test --workspace` from running the remaining suites.

use std::time::{Duration, Instant};

use dwgam::basis::{build_design, resolve_specs, DesignPair};
use dwgam::data::{Column, ColumnKind, Dataset};
use dwgam::distribution::{
    cdf, continuous_quantile, dispersion_vs_poisson, interval_censored_weibull_loglik,
    log_likelihood, log_pmf, median, pmf, quantile, DWParams, MomentOptions,
};
use dwgam::prediction::partial_effects;
use dwgam::regression::{
    fit, neg_loglik, neg_loglik_gradient, randomized_quantile_residuals, residual_normality,
    stepwise_select, FitOptions, ModelSpec, StepwiseOptions,
};
use dwgam::simulation::{
    dw_truth, gen_dw_case, run_benchmark, BenchmarkReport, Dispersion, DwCase, ModelKind,
    NbParams, Scenario, ScenarioConfig,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Z_95: f64 = 1.959_963_984_540_054;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn q_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

fn beta_grid() -> Vec<f64> {
    vec![0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0]
}

fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for t in terms {
        let next = sum + t;
        carry += if sum.abs() >= t.abs() { (sum - next) + t } else { (t - next) + sum };
        sum = next;
    }
    sum + carry
}

fn distribution_identities() -> Outcome {
    let start = Instant::now();
    let taus: Vec<f64> = (1..400).map(|i| i as f64 / 400.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for q in q_grid() {
        for beta in beta_grid() {
            let p = DWParams::new(q, beta).unwrap();
            let top = quantile(1.0 - 1e-10, &p).unwrap();
            if cdf(top as i64, &p) < 1.0 - 1e-9 {
                failures.push(format!("coverage q={q} beta={beta}"));
            }
            let cut = top.min(200_000);
            let total = compensated_sum((0..=cut).map(|y| pmf(y, &p)));
            if (total - cdf(cut as i64, &p)).abs() > 1e-12 {
                failures.push(format!("telescoping q={q} beta={beta}"));
            }
            if median(&p) != quantile(0.5, &p).unwrap() {
                failures.push(format!("median q={q} beta={beta}"));
            }
            for &tau in &taus {
                let m = quantile(tau, &p).unwrap();
                let dual = cdf(m as i64, &p) >= tau && (m == 0 || cdf(m as i64 - 1, &p) < tau);
                let c = continuous_quantile(tau, &p).unwrap();
                let ceiled = c.ceil().max(0.0) as u64 == m || (c - c.round()).abs() < 1e-9;
                if !dual || !ceiled {
                    failures.push(format!("duality q={q} beta={beta} tau={tau}"));
                }
            }
            for y in 0..80 {
                let f = pmf(y, &p);
                let l = log_pmf(y, &p);
                let ok = if f > 1e-300 {
                    (l - f.ln()).abs() <= 1e-12 * f.ln().abs().max(1e-300)
                } else {
                    l.is_finite()
                };
                if !ok {
                    failures.push(format!("log_pmf q={q} beta={beta} y={y}"));
                }
            }
            let ys: Vec<u64> = (0..50).map(|_| rng.random_range(0..=top.min(60))).collect();
            let a = interval_censored_weibull_loglik(&ys, &p);
            let b = log_likelihood(&ys, &p);
            if (a - b).abs() > 1e-10 * b.abs().max(1.0) {
                failures.push(format!("censored identity q={q} beta={beta}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 10.0,
        format!(
            "{} grid points, {} violations{}, {secs:.1} s (limit 10 s)",
            q_grid().len() * beta_grid().len(),
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first: {f})"))
        ),
    )
}

fn dispersion_regimes() -> Outcome {
    let start = Instant::now();
    let opts = MomentOptions::default();
    let mut bad = 0;
    let mut checked = 0;
    for q in q_grid() {
        for beta in beta_grid() {
            let vr = dispersion_vs_poisson(&DWParams::new(q, beta).unwrap(), &opts).unwrap().value;
            if beta <= 1.0 {
                checked += 1;
                bad += usize::from(vr <= 1.0);
            }
            if beta >= 3.0 {
                checked += 1;
                bad += usize::from(vr >= 1.0);
            }
        }
    }
    let mut worst_bernoulli: f64 = 0.0;
    for q in q_grid() {
        let vr = dispersion_vs_poisson(&DWParams::new(q, 50.0).unwrap(), &opts).unwrap().value;
        worst_bernoulli = worst_bernoulli.max((vr - (1.0 - q)).abs() / (1.0 - q));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad == 0 && worst_bernoulli < 0.01 && secs < 10.0,
        format!(
            "{bad}/{checked} regime violations, Bernoulli-limit max rel. error {worst_bernoulli:.2e}, {secs:.1} s"
        ),
    )
}

fn fourth_order_gradient(f: &impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-3 * x[i].abs().max(1.0);
        let at = |s: f64| {
            let mut y = x.clone();
            y[i] += s * h;
            f(&y)
        };
        (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
    })
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400;
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let d: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
    let y: Vec<u64> = (0..n).map(|_| rng.random_range(0..20)).collect();
    let data = Dataset::new(
        y,
        vec![Column::continuous("x", x), Column::continuous("z", z), Column::dummy("d", d)],
    )
    .unwrap();
    let specs = ["q=x, beta=1", "q=x+z+d, beta=x+z+d", "q=x:d3k3+d, beta=x:d3k3", "q=x:d2k2+z, beta=z:d2k1+d"];
    let mut worst_central: f64 = 0.0;
    let mut worst_analytic: f64 = 0.0;
    let mut worst_symmetry: f64 = 0.0;
    let mut points = 0;
    for text in specs {
        let spec: ModelSpec = text.parse().unwrap();
        let dp = DesignPair {
            q: build_design(&data, &resolve_specs(&data, &spec.q, None).unwrap(), None).unwrap(),
            beta: build_design(&data, &resolve_specs(&data, &spec.beta, None).unwrap(), None).unwrap(),
        };
        let kq = dp.q.ncols();
        let k = kq + dp.beta.ncols();
        let f = |v: &DVector<f64>| neg_loglik(data.y(), &dp, &v.as_slice()[..kq], &v.as_slice()[kq..]).unwrap();
        let grad = |v: &DVector<f64>| {
            let (_, a, b) = neg_loglik_gradient(data.y(), &dp, &v.as_slice()[..kq], &v.as_slice()[kq..]).unwrap();
            DVector::from_iterator(k, a.into_iter().chain(b))
        };
        for _ in 0..50 {
            let v = DVector::from_fn(k, |i, _| {
                let centre = if i == 0 { -0.5 } else { 0.0 };
                centre + rng.random_range(-0.4..0.4)
            });
            let reference = fourth_order_gradient(&f, &v);
            let central = dwgam::optim::central_gradient(f, &v);
            let analytic = grad(&v);
            let scale = reference.amax().max(1.0);
            worst_central = worst_central.max((&central - &reference).amax() / scale);
            worst_analytic = worst_analytic.max((&analytic - &reference).amax() / scale);
            points += 1;
            if points % 10 == 0 {
                // Hessian from differences of the analytic gradient must be symmetric.
                let h = 1e-5;
                let cols: Vec<DVector<f64>> = (0..k)
                    .map(|j| {
                        let mut up = v.clone();
                        let mut dn = v.clone();
                        up[j] += h;
                        dn[j] -= h;
                        (grad(&up) - grad(&dn)) / (2.0 * h)
                    })
                    .collect();
                let hess = nalgebra::DMatrix::from_columns(&cols);
                let asym = (&hess - hess.transpose()).amax() / hess.amax().max(1.0);
                worst_symmetry = worst_symmetry.max(asym);
            }
        }
    }
    outcome(
        worst_central < 1e-5 && worst_analytic < 1e-5 && worst_symmetry < 1e-5,
        format!(
            "{points} points over {} specs; max rel. error central {worst_central:.1e}, analytic {worst_analytic:.1e}, Hessian asymmetry {worst_symmetry:.1e} (limit 1e-5)",
            specs.len()
        ),
    )
}

fn benchmark(case: DwCase, disp: Dispersion, models: Vec<ModelKind>) -> BenchmarkReport {
    let mut cfg = ScenarioConfig::new(Scenario::Dw(case), Some(disp), 1000, 100, 20_240_601 + case.number() as u64);
    cfg.models = models;
    run_benchmark(&cfg).expect("benchmark runs")
}

fn coverage(report: &BenchmarkReport, truth: &[f64]) -> Vec<f64> {
    let results: Vec<_> = report.results(ModelKind::Dw).collect();
    (0..truth.len())
        .map(|i| {
            let hit = results
                .iter()
                .filter(|r| {
                    r.std_errors
                        .as_ref()
                        .is_some_and(|se| (r.estimates[i] - truth[i]).abs() <= 3.0 * se[i])
                })
                .count();
            hit as f64 / results.len().max(1) as f64
        })
        .collect()
}

fn parameter_recovery(over: &BenchmarkReport, under: &BenchmarkReport, secs: f64) -> Outcome {
    let mut pass = secs < 300.0;
    let mut parts = Vec::new();
    for (report, disp, target) in [(over, Dispersion::Over, 0.443), (under, Dispersion::Under, 0.153)] {
        let t = dw_truth(DwCase::LinearQ, disp);
        let truth: Vec<f64> = t.theta.iter().chain(&t.vartheta).copied().collect();
        let cov = coverage(report, &truth);
        let rmse = report.mean_rmse(ModelKind::Dw, 0.5, 1000).unwrap_or(f64::NAN);
        let ok_cov = cov.iter().all(|&c| c >= 0.9);
        let ok_rmse = (rmse - target).abs() <= 0.5 * target;
        pass &= ok_cov && ok_rmse;
        let fails = report.failures.iter().filter(|f| f.model == ModelKind::Dw).count();
        parts.push(format!(
            "1{}: coverage {:?}, RMSE(0.5) {rmse:.3} vs {target} +/-50%, {fails} failed fits",
            disp.letter(),
            cov.iter().map(|c| format!("{:.0}%", c * 100.0)).collect::<Vec<_>>()
        ));
    }
    parts.push(format!("{secs:.0} s (limit 300 s)"));
    outcome(pass, parts.join("; "))
}

fn model_ordering(reports: &[(String, BenchmarkReport)]) -> Outcome {
    let mut violations = Vec::new();
    let mut cells = Vec::new();
    for (label, report) in reports {
        for tau in [0.25, 0.75] {
            let dw = report.mean_rmse(ModelKind::Dw, tau, 1000).unwrap_or(f64::NAN);
            let po = report.mean_rmse(ModelKind::Poisson, tau, 1000).unwrap_or(f64::NAN);
            cells.push(format!("{label}@{tau}: {dw:.3}<{po:.3}"));
            if !(dw < po) {
                violations.push(format!("{label} tau={tau} (DW {dw:.3} vs Poisson {po:.3})"));
            }
        }
    }
    let detail = if violations.is_empty() {
        format!("all 16 cells ordered; {}", cells.join(", "))
    } else {
        format!("{}/16 cells violate: {}; all cells: {}", violations.len(), violations.join(", "), cells.join(", "))
    };
    outcome(violations.is_empty(), detail)
}

fn tail_detection(report: &BenchmarkReport) -> Outcome {
    let dw: Vec<_> = report.results(ModelKind::Dw).collect();
    let idx = |r: &dwgam::simulation::ReplicateResult, label: &str| r.labels.iter().position(|l| l == label).unwrap();
    let z = |r: &dwgam::simulation::ReplicateResult, label: &str| {
        let i = idx(r, label);
        r.std_errors.as_ref().map_or(0.0, |se| r.estimates[i] / se[i])
    };
    let both = dw
        .iter()
        .filter(|r| z(r, "q:x1").abs() > Z_95 && z(r, "beta:x2") < -Z_95)
        .count();
    let q_x2_ns = dw.iter().filter(|r| z(r, "q:x2").abs() <= Z_95).count();
    let nb: Vec<_> = report.results(ModelKind::NegBin).collect();
    let nb_x1 = nb.iter().map(|r| r.estimates[idx(r, "mu:x1")]).sum::<f64>() / nb.len().max(1) as f64;
    let mean_q_x2 = dw.iter().map(|r| r.estimates[idx(r, "q:x2")]).sum::<f64>() / dw.len().max(1) as f64;
    let n = dw.len() as f64;
    let pass = both as f64 >= 0.8 * n && q_x2_ns as f64 >= 0.6 * n && (nb_x1 - 0.7).abs() <= 0.15;
    outcome(
        pass,
        format!(
            "{} usable DW fits: q:x1 sig. and beta:x2 neg. sig. in {both} (need 80%); q:x2 n.s. in {q_x2_ns} (need 60%, mean estimate {mean_q_x2:+.3}); NB mu:x1 mean {nb_x1:.3} (0.7 +/- 0.15)",
            dw.len()
        ),
    )
}

/// Counts whose dispersion grows enormously with x while the mean stays at 5.
fn dispersion_shift_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y = x
        .iter()
        .map(|&v| NbParams { mu: 5.0, sigma: (-6.0 + 9.0 * v).exp() }.sample(&mut rng))
        .collect();
    Dataset::new(y, vec![Column::continuous("x", x)]).unwrap()
}

fn residual_calibration() -> Outcome {
    let cases = [
        (DwCase::LinearQ, Dispersion::Over),
        (DwCase::LinearQ, Dispersion::Under),
        (DwCase::LinearBoth, Dispersion::Over),
        (DwCase::LinearBoth, Dispersion::Under),
    ];
    let mut pass_count = 0;
    let mut total = 0;
    for rep in 0..100u64 {
        let (case, disp) = cases[rep as usize % cases.len()];
        let sim = gen_dw_case(case, disp, 1000, 7000 + rep).unwrap();
        let spec = dw_truth(case, disp).spec;
        let Ok(m) = fit(&sim.data, &spec, &FitOptions { seed: rep, ..FitOptions::default() }) else { continue };
        let r = randomized_quantile_residuals(&m, &sim.data, rep).unwrap();
        total += 1;
        pass_count += usize::from(residual_normality(&r).unwrap().p_value > 0.01);
    }
    let mut rejected = 0;
    let spec: ModelSpec = "q=x, beta=1".parse().unwrap();
    for rep in 0..100u64 {
        let data = dispersion_shift_data(1000, 9000 + rep);
        let opts = FitOptions { seed: rep, fixed_beta: Some(1.0), ..FitOptions::default() };
        let m = fit(&data, &spec, &opts).unwrap();
        let r = randomized_quantile_residuals(&m, &data, rep).unwrap();
        rejected += usize::from(residual_normality(&r).unwrap().p_value <= 0.01);
    }
    outcome(
        pass_count as f64 >= 0.9 * total as f64 && total >= 95 && rejected >= 60,
        format!(
            "correct models pass KS(1%) in {pass_count}/{total} (need 90%); dispersion-shift data with beta forced to 1 rejected in {rejected}/100 (need 60)"
        ),
    )
}

fn stepwise_sanity() -> Outcome {
    let base = ModelSpec::linear(&[("x", ColumnKind::Continuous)]);
    let mut linear = 0;
    let mut monotone = 0;
    let reps = 50;
    for rep in 0..reps {
        let sim = gen_dw_case(DwCase::LinearQ, Dispersion::Over, 1000, 5000 + rep).unwrap();
        let opts = StepwiseOptions {
            fit: FitOptions { seed: rep, ..FitOptions::default() },
            ..StepwiseOptions::default()
        };
        let res = stepwise_select(&sim.data, &base, &["x".into()], &opts).unwrap();
        let aics: Vec<f64> = res.path().iter().map(|t| t.aic.unwrap()).collect();
        monotone += usize::from(aics.windows(2).all(|w| w[1] < w[0]));
        let spec = &res.model.spec;
        linear += usize::from(spec.q.iter().chain(&spec.beta).all(|c| c.degree == 1 && c.num_knots == 0));
    }
    outcome(
        linear as f64 >= 0.6 * reps as f64 && monotone == reps as usize,
        format!("linear model kept in {linear}/{reps} (need 60%); strictly decreasing AIC path in {monotone}/{reps}"),
    )
}

/// Survey-shaped synthetic data: two continuous covariates and 51 dummies.
fn survey_like(n: usize, seed: u64) -> (Dataset, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let age: Vec<f64> = (0..n).map(|_| rng.random_range(28.0..70.0f64).round()).collect();
    let size: Vec<f64> = (0..n).map(|_| rng.random_range(2..13) as f64).collect();
    let mut columns = vec![Column::continuous("age", age.clone()), Column::continuous("size", size.clone())];
    let mut names = vec!["age".to_string(), "size".to_string()];
    let mut dummies = Vec::new();
    for j in 0..51 {
        let share = 0.05 + 0.4 * (j as f64 / 51.0);
        let v: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < share)).collect();
        names.push(format!("d{j}"));
        columns.push(Column::dummy(format!("d{j}"), v.clone()));
        dummies.push(v);
    }
    let y = (0..n)
        .map(|i| {
            let a = (age[i] - 48.0) / 20.0;
            let s = (size[i] - 7.0) / 5.0;
            let eta = -1.6 - 0.3 * a + 0.4 * a * a - 0.5 * s + 0.2 * s * s
                + 0.1 * (dummies[0][i] - dummies[1][i] + dummies[2][i]);
            let zeta = 0.9 + 0.2 * s - 0.1 * dummies[3][i];
            dwgam::distribution::sample_one(&DWParams::from_links(eta, zeta).unwrap(), &mut rng)
        })
        .collect();
    (Dataset::new(y, columns).unwrap(), names)
}

fn performance(suite: Duration) -> Outcome {
    let sim = dwgam::simulation::gen_nb_tail(1000, 77).unwrap();
    let spec: ModelSpec = "q=x1+x2, beta=x1+x2".parse().unwrap();
    let start = Instant::now();
    let m = fit(&sim.data, &spec, &FitOptions::default()).unwrap();
    let fit_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (data, names) = survey_like(5906, 1);
    let kinds: Vec<(&str, ColumnKind)> = names
        .iter()
        .zip(data.columns())
        .map(|(n, c)| (n.as_str(), c.kind))
        .collect();
    let base = ModelSpec::linear(&kinds);
    let opts = StepwiseOptions {
        fit: FitOptions { scale_covariates: true, starts: 1, ..FitOptions::default() },
        ..StepwiseOptions::default()
    };
    let survey = stepwise_select(&data, &base, &["age".into(), "size".into()], &opts).and_then(|res| {
        let r = randomized_quantile_residuals(&res.model, &data, 1)?;
        residual_normality(&r)?;
        partial_effects(&res.model, &data, &[0.25, 0.5, 0.75], &names)?;
        Ok(res)
    });
    let survey_secs = start.elapsed().as_secs_f64();
    let survey_detail = match &survey {
        Ok(res) => format!(
            "survey-shaped workflow (5906 rows, 53 covariates, stepwise + residuals + effects) {survey_secs:.0} s, selected {} with {} params (limit 300 s)",
            res.model.spec.q.iter().take(2).map(|s| format!("{}:d{}k{}", s.covariate, s.degree, s.num_knots)).collect::<Vec<_>>().join(" "),
            res.model.num_params()
        ),
        Err(e) => format!("survey-shaped workflow failed: {e}"),
    };
    let suite_secs = suite.as_secs_f64();
    outcome(
        m.converged && fit_secs < 2.0 && suite_secs < 900.0 && survey.is_ok() && survey_secs < 300.0,
        format!(
            "linear 2-covariate fit n=1000 {fit_secs:.3} s (limit 2 s); benchmark suite {suite_secs:.0} s (limit 900 s); {survey_detail}"
        ),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut check = |id: usize, title: &str, o: Outcome| {
        println!("{} [{id}] {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    };
    check(1, "distribution identities", distribution_identities());
    check(2, "dispersion regimes", dispersion_regimes());
    check(3, "gradient and Hessian checks", gradient_checks());

    let suite_start = Instant::now();
    let both = vec![ModelKind::Dw, ModelKind::Poisson];
    let mut reports = Vec::new();
    let recovery_start = Instant::now();
    for disp in [Dispersion::Over, Dispersion::Under] {
        reports.push((format!("1{}", disp.letter()), benchmark(DwCase::LinearQ, disp, both.clone())));
    }
    let recovery_secs = recovery_start.elapsed().as_secs_f64();
    check(4, "parameter recovery", parameter_recovery(&reports[0].1, &reports[1].1, recovery_secs));
    for case in [DwCase::LinearBoth, DwCase::SplineQ, DwCase::SplineBoth] {
        for disp in [Dispersion::Over, Dispersion::Under] {
            reports.push((format!("{}{}", case.number(), disp.letter()), benchmark(case, disp, both.clone())));
        }
    }
    check(5, "DW beats Poisson in the tails", model_ordering(&reports));
    let mut tail_cfg = ScenarioConfig::new(Scenario::NbTail, None, 1000, 100, 20_240_606);
    tail_cfg.models = vec![ModelKind::Dw, ModelKind::NegBin];
    let tail = run_benchmark(&tail_cfg).expect("tail benchmark runs");
    check(6, "tail-effect detection", tail_detection(&tail));
    let suite = suite_start.elapsed();

    check(7, "residual calibration", residual_calibration());
    check(8, "stepwise sanity", stepwise_sanity());
    check(9, "performance", performance(suite));

    if failed.is_empty() {
        println!("acceptance: all 9 criteria PASS");
    } else {
        println!("acceptance: {} of 9 criteria FAIL: {failed:?}", failed.len());
        if std::env::var("DWGAM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
