use dwgam::distribution::cdf;
use dwgam::regression::{fit, FitOptions};
use dwgam::simulation::{
    fit_negbin, gen_dw_case, gen_nb_tail, nb_tail_spec, replicate_seed, rmse, run_benchmark,
    Dispersion, DwCase, ModelKind, Scenario, ScenarioConfig, Truth,
};

fn variance_ratio(y: &[u64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<u64>() as f64 / n;
    let v = y.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    v / m
}

#[test]
fn case_one_dispersion_bands() {
    let over = gen_dw_case(DwCase::LinearQ, Dispersion::Over, 50_000, 1).unwrap();
    let vr = variance_ratio(over.data.y());
    assert!((1.3..=5.0).contains(&vr), "over-dispersed VR {vr}");
    let under = gen_dw_case(DwCase::LinearQ, Dispersion::Under, 50_000, 1).unwrap();
    let vr = variance_ratio(under.data.y());
    assert!((0.2..=0.6).contains(&vr), "under-dispersed VR {vr}");
}

#[test]
fn true_quantiles_satisfy_duality() {
    for case in DwCase::ALL {
        for disp in [Dispersion::Over, Dispersion::Under] {
            let sim = gen_dw_case(case, disp, 300, 4).unwrap();
            let Truth::Dw(params) = &sim.truth else { panic!("expected DW truth") };
            for tau in [0.1, 0.25, 0.5, 0.75, 0.9] {
                let q = sim.true_quantiles(tau).unwrap();
                for (m, p) in q.iter().zip(params) {
                    assert!(cdf(*m as i64, p) >= tau);
                    assert!(*m == 0 || cdf(*m as i64 - 1, p) < tau);
                }
            }
        }
    }
}

#[test]
fn same_seed_same_dataset() {
    let a = gen_nb_tail(200, 9).unwrap();
    let b = gen_nb_tail(200, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, gen_nb_tail(200, 10).unwrap());
}

#[test]
fn nb_dispersion_covariate_leaves_mean_alone() {
    let sim = gen_nb_tail(60_000, 2).unwrap();
    let y: Vec<f64> = sim.data.y().iter().map(|&v| v as f64).collect();
    let x2 = &sim.data.column("x2").unwrap().values;
    let n = y.len() as f64;
    let (my, mx) = (y.iter().sum::<f64>() / n, x2.iter().sum::<f64>() / n);
    let sxy: f64 = y.iter().zip(x2).map(|(a, b)| (a - my) * (b - mx)).sum();
    let sxx: f64 = x2.iter().map(|b| (b - mx).powi(2)).sum();
    let slope = sxy / sxx;
    // Mean of y is about 1.9, so a relevant effect would be order one.
    assert!(slope.abs() < 0.1, "slope {slope}");
}

#[test]
fn nb_fit_recovers_links() {
    let sim = gen_nb_tail(1000, 3).unwrap();
    let b = fit_negbin(&sim.data, &nb_tail_spec(), &FitOptions::default()).unwrap();
    assert!(b.converged);
    assert!((b.mu_coef[1] - 0.7).abs() < 0.3, "mu x1 {}", b.mu_coef[1]);
    assert!(b.mu_coef[2].abs() < 0.3, "mu x2 {}", b.mu_coef[2]);
    assert!((b.sigma_coef[2] - 2.0).abs() < 1.5, "sigma x2 {}", b.sigma_coef[2]);
}

#[test]
fn rmse_matches_direct_recomputation() {
    let a = [3u64, 0, 7, 2, 2, 9];
    let b = [1u64, 0, 4, 2, 5, 9];
    let direct = ((4.0 + 0.0 + 9.0 + 0.0 + 9.0 + 0.0) / 6.0f64).sqrt();
    assert_eq!(rmse(&a, &b).unwrap(), direct);
    assert!(rmse(&a, &b[..3]).is_err());
}

#[test]
fn benchmark_is_deterministic() {
    let mut cfg = ScenarioConfig::new(Scenario::Dw(DwCase::LinearBoth), Some(Dispersion::Under), 200, 3, 5);
    cfg.n = vec![100, 200];
    let a = run_benchmark(&cfg).unwrap();
    let b = run_benchmark(&cfg).unwrap();
    assert_eq!(a.raw, b.raw);
    assert_eq!(a.cells, b.cells);
    assert_eq!(a.cells.len(), 3 * 3 * 2);
    assert!(a.to_tsv().contains("dw:n=100"));
}

#[test]
fn single_replicate_equals_direct_evaluation() {
    let mut cfg = ScenarioConfig::new(Scenario::Dw(DwCase::LinearQ), Some(Dispersion::Over), 300, 1, 42);
    cfg.models = vec![ModelKind::Dw];
    let report = run_benchmark(&cfg).unwrap();

    let seed = replicate_seed(42, 0);
    let sim = gen_dw_case(DwCase::LinearQ, Dispersion::Over, 300, seed).unwrap();
    let opts = FitOptions { seed, ..FitOptions::default() };
    let m = fit(&sim.data, &cfg.model_spec(), &opts).unwrap();
    let params = m.params_for(&sim.data).unwrap();
    for (j, &tau) in cfg.tau_grid.iter().enumerate() {
        let fitted: Vec<u64> = params.iter().map(|p| dwgam::distribution::quantile(tau, p).unwrap()).collect();
        let expected = rmse(&fitted, &sim.true_quantiles(tau).unwrap()).unwrap();
        assert_eq!(report.mean_rmse(ModelKind::Dw, tau, 300), Some(expected));
        assert_eq!(report.raw[0].rmse[j], expected);
    }
}

#[test]
fn config_file_accepts_single_or_many_sizes() {
    let one: ScenarioConfig =
        serde_json::from_str(r#"{"case": 2, "dispersion": "b", "n": 50, "replicates": 2}"#).unwrap();
    assert_eq!(one.n, vec![50]);
    let many: ScenarioConfig =
        serde_json::from_str(r#"{"case": "nb_tail", "n": [50, 100], "replicates": 1, "models": ["dw"]}"#).unwrap();
    assert_eq!(many.n, vec![50, 100]);
    assert_eq!(many.label(), "nb_tail");
    let missing = ScenarioConfig::new(Scenario::Dw(DwCase::LinearQ), None, 10, 1, 0);
    assert!(missing.validate().is_err());
}
