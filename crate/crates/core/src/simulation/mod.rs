//! Monte-Carlo benchmark comparing quantile accuracy of discrete Weibull,
//! Poisson and negative binomial regressions on simulated data.
//!
//! Each replicate draws its own seed from `(config.seed, replicate)` so that
//! serial and parallel runs give the same report.

mod baselines;
mod scenarios;

use std::fmt::{self, Write as _};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{fit_negbin, fit_poisson, rmse, BaselineFit, BaselineKind};
pub use scenarios::{
    dw_truth, gen_dw_case, gen_nb_tail, nb_tail_spec, Dispersion, DwCase, DwTruth, NbParams,
    SimulatedData, Truth, SPLINE_KNOTS,
};

use crate::distribution::quantile;
use crate::error::{Error, Result};
use crate::regression::{fit, FitOptions, ModelSpec};

/// Data-generating scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "String")]
pub enum Scenario {
    Dw(DwCase),
    NbTail,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Dw(c) => write!(f, "{}", c.number()),
            Scenario::NbTail => f.write_str("nb_tail"),
        }
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> Self {
        s.to_string()
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nb_tail" | "nb" => Ok(Scenario::NbTail),
            other => other
                .parse::<u8>()
                .map_err(|_| Error::InvalidSpec(format!("unknown scenario `{other}`")))
                .and_then(DwCase::from_number)
                .map(Scenario::Dw),
        }
    }
}

impl TryFrom<serde_json::Value> for Scenario {
    type Error = Error;

    fn try_from(v: serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => s.parse(),
            serde_json::Value::Number(n) => n.to_string().parse(),
            other => Err(Error::InvalidSpec(format!("unknown scenario {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dw,
    Poisson,
    NegBin,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dw => "dw",
            ModelKind::Poisson => "poisson",
            ModelKind::NegBin => "negbin",
        })
    }
}

fn default_taus() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Dw, ModelKind::Poisson, ModelKind::NegBin]
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(n) => vec![n],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case: Scenario,
    /// Required for discrete Weibull scenarios, ignored otherwise.
    #[serde(default)]
    pub dispersion: Option<Dispersion>,
    /// One or more sample sizes.
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_taus")]
    pub tau_grid: Vec<f64>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub fit: FitOptions,
}

impl ScenarioConfig {
    pub fn new(case: Scenario, dispersion: Option<Dispersion>, n: usize, replicates: usize, seed: u64) -> Self {
        Self {
            case,
            dispersion,
            n: vec![n],
            replicates,
            seed,
            tau_grid: default_taus(),
            models: default_models(),
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidSpec("replicates must be at least 1".into()));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::InvalidSpec("sample sizes must be positive".into()));
        }
        if self.tau_grid.is_empty() {
            return Err(Error::InvalidSpec("tau grid is empty".into()));
        }
        if let Some(&t) = self.tau_grid.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::ProbabilityDomain(t));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidSpec("no models requested".into()));
        }
        if matches!(self.case, Scenario::Dw(_)) && self.dispersion.is_none() {
            return Err(Error::InvalidSpec(
                "discrete Weibull scenarios need a dispersion variant".into(),
            ));
        }
        Ok(())
    }

    /// Short scenario name such as `1a` or `nb_tail`.
    pub fn label(&self) -> String {
        match (self.case, self.dispersion) {
            (Scenario::Dw(c), Some(d)) => format!("{}{}", c.number(), d.letter()),
            (s, _) => s.to_string(),
        }
    }

    /// Model spec shared by all competitors (matched complexity).
    pub fn model_spec(&self) -> ModelSpec {
        match (self.case, self.dispersion) {
            (Scenario::Dw(c), Some(d)) => dw_truth(c, d).spec,
            _ => nb_tail_spec(),
        }
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<SimulatedData> {
        match (self.case, self.dispersion) {
            (Scenario::Dw(c), Some(d)) => gen_dw_case(c, d, n, seed),
            (Scenario::Dw(_), None) => Err(Error::InvalidSpec("missing dispersion variant".into())),
            (Scenario::NbTail, _) => gen_nb_tail(n, seed),
        }
    }
}

/// Seed of one replicate, a SplitMix64 hash of the base seed and index.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(replicate as u64))
}

/// One model fitted on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub model: ModelKind,
    /// RMSE per tau, in grid order.
    pub rmse: Vec<f64>,
    /// Coefficient labels prefixed by their link, e.g. `q:x` or `sigma:x2`.
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub n: usize,
    pub replicate: usize,
    pub model: ModelKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub model: ModelKind,
    pub tau: f64,
    pub n: usize,
    /// `None` when every replicate failed.
    pub mean_rmse: Option<f64>,
    pub used: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub model: ModelKind,
    pub n: usize,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub tool_version: String,
    pub config: ScenarioConfig,
    pub cells: Vec<ReportCell>,
    pub raw: Vec<ReplicateResult>,
    pub failures: Vec<FailureRecord>,
    /// Wall-clock fitting and prediction time; not deterministic.
    pub timings: Vec<Timing>,
}

impl BenchmarkReport {
    pub fn cell(&self, model: ModelKind, tau: f64, n: usize) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.tau == tau && c.n == n)
    }

    pub fn mean_rmse(&self, model: ModelKind, tau: f64, n: usize) -> Option<f64> {
        self.cell(model, tau, n).and_then(|c| c.mean_rmse)
    }

    pub fn results(&self, model: ModelKind) -> impl Iterator<Item = &ReplicateResult> {
        self.raw.iter().filter(move |r| r.model == model)
    }

    /// Mean RMSE table: one row per tau, one column per model and sample size.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dwgam {}", self.tool_version);
        let _ = writeln!(
            out,
            "# config: {}",
            serde_json::to_string(&self.config).unwrap_or_default()
        );
        out.push_str("scenario\ttau");
        for m in &self.config.models {
            for n in &self.config.n {
                let _ = write!(out, "\t{m}:n={n}");
            }
        }
        out.push('\n');
        let label = self.config.label();
        for &tau in &self.config.tau_grid {
            let _ = write!(out, "{label}\t{tau}");
            for &m in &self.config.models {
                for &n in &self.config.n {
                    match self.mean_rmse(m, tau, n) {
                        Some(v) => {
                            let _ = write!(out, "\t{v:.4}");
                        }
                        None => out.push_str("\tNA"),
                    }
                }
            }
            out.push('\n');
        }
        let failed: usize = self.failures.len();
        if failed > 0 {
            let _ = writeln!(out, "# failed fits excluded: {failed}");
        }
        out
    }
}

fn prefixed<'a>(prefix: &str, labels: &'a [String]) -> impl Iterator<Item = String> + 'a {
    let prefix = prefix.to_string();
    labels.iter().map(move |l| format!("{prefix}:{l}"))
}

fn run_model(
    model: ModelKind,
    sim: &SimulatedData,
    spec: &ModelSpec,
    taus: &[f64],
    options: &FitOptions,
    truth: &[Vec<u64>],
) -> Result<(Vec<f64>, Vec<String>, Vec<f64>, Option<Vec<f64>>)> {
    let data = &sim.data;
    let (fitted, labels, estimates, ses) = match model {
        ModelKind::Dw => {
            let m = fit(data, spec, options)?;
            if !m.converged {
                return Err(Error::Degenerate(m.warnings.join("; ")));
            }
            let params = m.params_for(data)?;
            let fitted = taus
                .iter()
                .map(|&t| params.iter().map(|p| quantile(t, p)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let labels = prefixed("q", &m.q_labels)
                .chain(prefixed("beta", &m.beta_labels))
                .collect();
            let estimates = m.coefficients();
            let ses = m.covariance.as_ref().map(|c| {
                (0..c.dim).map(|i| c.get(i, i).max(0.0).sqrt()).collect()
            });
            (fitted, labels, estimates, ses)
        }
        ModelKind::Poisson | ModelKind::NegBin => {
            let b = if model == ModelKind::Poisson {
                fit_poisson(data, spec, options)?
            } else {
                fit_negbin(data, spec, options)?
            };
            if !b.converged {
                return Err(Error::Degenerate(format!("{model} fit did not converge")));
            }
            let fitted = taus
                .iter()
                .map(|&t| b.quantiles(data, t))
                .collect::<Result<Vec<_>>>()?;
            let labels = prefixed("mu", &b.mu_labels)
                .chain(prefixed("sigma", &b.sigma_labels))
                .collect();
            let estimates = b.mu_coef.iter().chain(&b.sigma_coef).copied().collect();
            (fitted, labels, estimates, b.std_errors())
        }
    };
    let rmse = fitted
        .iter()
        .zip(truth)
        .map(|(f, t)| rmse(f, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((rmse, labels, estimates, ses))
}

type ReplicateOutput = Vec<(ModelKind, std::result::Result<ReplicateResult, String>, f64)>;

fn run_replicate(config: &ScenarioConfig, spec: &ModelSpec, n: usize, replicate: usize) -> ReplicateOutput {
    let seed = replicate_seed(config.seed, replicate);
    let prepared = config.simulate(n, seed).and_then(|sim| {
        let truth = config
            .tau_grid
            .iter()
            .map(|&t| sim.true_quantiles(t))
            .collect::<Result<Vec<_>>>()?;
        Ok((sim, truth))
    });
    let (sim, truth) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return config
                .models
                .iter()
                .map(|&m| (m, Err(format!("simulation failed: {e}")), 0.0))
                .collect()
        }
    };
    let options = FitOptions {
        seed,
        ..config.fit.clone()
    };
    config
        .models
        .iter()
        .map(|&model| {
            let start = Instant::now();
            let res = run_model(model, &sim, spec, &config.tau_grid, &options, &truth);
            let secs = start.elapsed().as_secs_f64();
            let res = res
                .map(|(rmse, labels, estimates, std_errors)| ReplicateResult {
                    n,
                    replicate,
                    seed,
                    model,
                    rmse,
                    labels,
                    estimates,
                    std_errors,
                })
                .map_err(|e| e.to_string());
            (model, res, secs)
        })
        .collect()
}

/// Runs every replicate of the scenario on the current rayon pool.
pub fn run_benchmark(config: &ScenarioConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let spec = config.model_spec();
    let jobs: Vec<(usize, usize)> = config
        .n
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let outputs: Vec<(usize, usize, ReplicateOutput)> = jobs
        .par_iter()
        .map(|&(n, r)| (n, r, run_replicate(config, &spec, n, r)))
        .collect();

    let mut raw = Vec::new();
    let mut failures = Vec::new();
    let mut timings: Vec<Timing> = Vec::new();
    for (n, replicate, out) in outputs {
        for (model, res, secs) in out {
            match timings.iter_mut().find(|t| t.model == model && t.n == n) {
                Some(t) => t.total_seconds += secs,
                None => timings.push(Timing {
                    model,
                    n,
                    total_seconds: secs,
                }),
            }
            match res {
                Ok(r) => raw.push(r),
                Err(message) => failures.push(FailureRecord {
                    n,
                    replicate,
                    model,
                    message,
                }),
            }
        }
    }

    let mut cells = Vec::new();
    for &model in &config.models {
        for &n in &config.n {
            let used: Vec<&ReplicateResult> =
                raw.iter().filter(|r| r.model == model && r.n == n).collect();
            let failed = failures.iter().filter(|f| f.model == model && f.n == n).count();
            for (j, &tau) in config.tau_grid.iter().enumerate() {
                let mean_rmse = (!used.is_empty())
                    .then(|| used.iter().map(|r| r.rmse[j]).sum::<f64>() / used.len() as f64);
                cells.push(ReportCell {
                    model,
                    tau,
                    n,
                    mean_rmse,
                    used: used.len(),
                    failed,
                });
            }
        }
    }
    if raw.is_empty() {
        return Err(Error::AllReplicatesFailed(
            failures
                .first()
                .map(|f| f.message.clone())
                .unwrap_or_default(),
        ));
    }
    Ok(BenchmarkReport {
        tool_version: crate::VERSION.to_string(),
        config: config.clone(),
        cells,
        raw,
        failures,
        timings,
    })
}
