use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dwgam::data::{covariate_rows, covariates_from_csv_reader, ColumnKind, Dataset};
use dwgam::distribution::{continuous_quantile, mean, quantile, MomentOptions};
use dwgam::prediction::{partial_effects, predict_params};
use dwgam::regression::{
    fit, load_model, randomized_quantile_residuals, residual_normality, save_model, stepwise_select,
    FitOptions, GradientMethod, ModelFile, ModelSpec, StepwiseOptions,
};
use dwgam::simulation::{run_benchmark, Dispersion, Scenario, ScenarioConfig, Truth};
use dwgam::{Error, VERSION};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_CONVERGENCE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidSpec(_) | Error::ProbabilityDomain(_) | Error::ParameterDomain { .. } => {
                EXIT_USAGE
            }
            Error::AllReplicatesFailed(_) => EXIT_CONVERGENCE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = Result<T, CliError>;

fn at_path<T>(path: &Path, r: dwgam::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

/// Discrete Weibull regression for count data.
#[derive(Debug, Parser)]
#[command(name = "dwgam", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and print its coefficient table.
    Fit(FitArgs),
    /// Forward stepwise search over spline complexity by AIC.
    Select(SelectArgs),
    /// Per-row quantiles, median and mean from a saved model.
    Predict(PredictArgs),
    /// Randomized quantile residuals with a normality test.
    Residuals(ResidualArgs),
    /// Partial effects on conditional quantiles.
    Effects(EffectArgs),
    /// Write a simulated dataset with its true parameters.
    Simulate(SimulateArgs),
    /// Run a Monte-Carlo benchmark described by a JSON config.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the count column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Columns to treat as continuous even if they only hold 0/1.
    #[arg(long, value_delimiter = ',')]
    pub continuous: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> CliResult<Dataset> {
        at_path(
            &self.data,
            Dataset::from_csv_path(&self.data, &self.response, &self.continuous),
        )
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitFlags {
    /// Seed for the jittered optimizer restarts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of optimizer starts.
    #[arg(long, default_value_t = 3)]
    pub starts: usize,
    /// Min-max scale continuous covariates before building bases.
    #[arg(long)]
    pub scale: bool,
    /// Hold beta fixed at this value.
    #[arg(long)]
    pub fixed_beta: Option<f64>,
    /// Use central differences instead of the analytic gradient.
    #[arg(long)]
    pub numeric_gradient: bool,
}

impl FitFlags {
    fn options(&self) -> FitOptions {
        FitOptions {
            seed: self.seed,
            starts: self.starts,
            scale_covariates: self.scale,
            fixed_beta: self.fixed_beta,
            gradient: if self.numeric_gradient {
                GradientMethod::CentralDifference
            } else {
                GradientMethod::Analytic
            },
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model spec, e.g. `q=x1:d2k3+x2, beta=x1`.
    #[arg(long)]
    pub spec: String,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Continuous covariates whose spline complexity is searched.
    #[arg(long, value_delimiter = ',', required = true)]
    pub smooth: Vec<String>,
    /// Starting spec; defaults to linear terms for every covariate in both links.
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub max_degree: u32,
    #[arg(long, default_value_t = 3)]
    pub max_knots: u32,
    /// Where to write the selected model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TSV file for the full AIC trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of covariate rows; extra columns are ignored.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub tau: Vec<f64>,
    /// Output TSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ResidualArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EffectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub tau: Vec<f64>,
    /// Covariates to report; defaults to all model covariates.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Scenario: 1, 2, 3, 4 or nb_tail.
    #[arg(long)]
    pub case: String,
    /// Dispersion variant for cases 1-4: a (over) or b (under).
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    /// JSON scenario config.
    #[arg(long)]
    pub config: PathBuf,
    /// Mean-RMSE table (TSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON file with every replicate result.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn header(config: &impl Serialize) -> String {
    format!(
        "# dwgam {VERSION}\n# config: {}\n",
        serde_json::to_string(config).unwrap_or_default()
    )
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_spec(s: &str) -> CliResult<ModelSpec> {
    s.parse::<ModelSpec>()
        .map_err(|e| CliError::usage(format!("bad --spec: {e}")))
}

fn check_taus(taus: &[f64]) -> CliResult<()> {
    if taus.is_empty() {
        return Err(CliError::usage("--tau needs at least one value"));
    }
    match taus.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        Some(t) => Err(CliError::usage(format!("--tau values must lie in (0, 1), got {t}"))),
        None => Ok(()),
    }
}

/// Writes the model and signals a convergence failure after the fact.
fn write_model(path: &Path, file: &ModelFile) -> CliResult<()> {
    save_model(path, file)?;
    if !file.model.converged {
        return Err(CliError {
            code: EXIT_CONVERGENCE,
            message: format!(
                "optimizer did not converge; partial model written to {}",
                path.display()
            ),
        });
    }
    Ok(())
}

fn load(path: &Path) -> CliResult<ModelFile> {
    at_path(path, load_model(path))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Residuals(a) => cmd_residuals(&a),
        Command::Effects(a) => cmd_effects(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    }
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let spec = parse_spec(&a.spec)?;
    let data = a.data.load()?;
    let model = fit(&data, &spec, &a.fit.options())?;
    let config = json!({ "command": "fit", "args": a, "fit_options": a.fit.options() });
    print!("{}{}", header(&config), model.summary());
    write_model(&a.out, &ModelFile::new(model, config))
}

fn default_spec(data: &Dataset) -> ModelSpec {
    let cols: Vec<(&str, ColumnKind)> = data
        .columns()
        .iter()
        .map(|c| (c.name.as_str(), c.kind))
        .collect();
    ModelSpec::linear(&cols)
}

fn cmd_select(a: &SelectArgs) -> CliResult<()> {
    let data = a.data.load()?;
    let base = match &a.spec {
        Some(s) => parse_spec(s)?,
        None => default_spec(&data),
    };
    let options = StepwiseOptions {
        max_degree: a.max_degree,
        max_knots: a.max_knots,
        fit: a.fit.options(),
    };
    let result = stepwise_select(&data, &base, &a.smooth, &options)?;
    let config = json!({
        "command": "select",
        "args": a,
        "base_spec": base.to_string(),
        "fit_options": options.fit,
    });
    let mut trace = header(&config);
    trace.push_str("step\tspec\tAIC\tLogLik\tparams\taccepted\tnote\n");
    for t in &result.trace {
        let num = |v: Option<f64>| v.map_or("NA".into(), |v| format!("{v:.4}"));
        let _ = writeln!(
            trace,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.step,
            t.spec,
            num(t.aic),
            num(t.loglik),
            t.num_params.map_or("NA".into(), |p| p.to_string()),
            if t.accepted { "yes" } else { "no" },
            t.note.as_deref().unwrap_or("")
        );
    }
    match &a.trace {
        Some(path) => fs::write(path, &trace)?,
        None => print!("{trace}"),
    }
    print!("{}", result.model.summary());
    let config = json!({
        "command": "select",
        "args": a,
        "path": result.path().iter().map(|t| t.spec.clone()).collect::<Vec<_>>(),
        "fit_options": options.fit,
    });
    write_model(&a.out, &ModelFile::new(result.model, config))
}

fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    check_taus(&a.tau)?;
    let file = load(&a.model)?;
    let columns = at_path(
        &a.data,
        fs::File::open(&a.data)
            .map_err(Error::from)
            .and_then(|f| covariates_from_csv_reader(f, &[])),
    )?;
    let opts = MomentOptions::default();
    let mut out = header(&json!({ "command": "predict", "args": a, "model_config": file.config }));
    out.push_str("row\tq\tbeta");
    for t in &a.tau {
        let _ = write!(out, "\tquantile_{t}\tcontinuous_{t}");
    }
    out.push_str("\tmedian\tmean\textrapolated\n");
    for (i, row) in covariate_rows(&columns).iter().enumerate() {
        let pred = predict_params(&file.model, row)?;
        let p = pred.params;
        let _ = write!(out, "{i}\t{}\t{}", p.q(), p.beta());
        for &t in &a.tau {
            let _ = write!(out, "\t{}\t{:.6}", quantile(t, &p)?, continuous_quantile(t, &p)?);
        }
        let m = mean(&p, &opts);
        let _ = writeln!(
            out,
            "\t{}\t{:.6}{}\t{}",
            quantile(0.5, &p)?,
            m.value,
            if m.truncated { "~" } else { "" },
            pred.extrapolated
        );
    }
    emit(a.out.as_deref(), &out)
}

fn cmd_residuals(a: &ResidualArgs) -> CliResult<()> {
    let file = load(&a.model)?;
    let data = a.data.load()?;
    let res = randomized_quantile_residuals(&file.model, &data, a.seed)?;
    let report = residual_normality(&res)?;
    let mut out = header(&json!({ "command": "residuals", "args": a }));
    let _ = writeln!(
        out,
        "# ks_statistic: {:.6}\n# ks_p_value: {:.6e}",
        report.ks_statistic, report.p_value
    );
    out.push_str("row\tresidual\ttheoretical\tsample\n");
    for (i, (r, (t, s))) in res.iter().zip(&report.qq).enumerate() {
        let _ = writeln!(out, "{i}\t{r:.6}\t{t:.6}\t{s:.6}");
    }
    eprintln!(
        "KS D = {:.4}, p = {:.4e}",
        report.ks_statistic, report.p_value
    );
    emit(a.out.as_deref(), &out)
}

fn cmd_effects(a: &EffectArgs) -> CliResult<()> {
    check_taus(&a.tau)?;
    let file = load(&a.model)?;
    let data = a.data.load()?;
    let covariates: Vec<String> = if a.covariates.is_empty() {
        file.model
            .spec
            .covariates()
            .into_iter()
            .map(str::to_string)
            .collect()
    } else {
        a.covariates.clone()
    };
    let table = partial_effects(&file.model, &data, &a.tau, &covariates)?;
    let mut out = header(&json!({ "command": "effects", "args": a }));
    out.push_str("# '*' marks effects significant at 5% by an approximate delta-method test\n");
    out.push_str(&table.to_tsv());
    emit(a.out.as_deref(), &out)
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let case: Scenario = a.case.parse()?;
    let dispersion = match (&case, &a.variant) {
        (Scenario::Dw(_), Some(v)) => Some(Dispersion::from_letter(v)?),
        (Scenario::Dw(_), None) => return Err(CliError::usage("--variant is required for cases 1-4")),
        (Scenario::NbTail, _) => None,
    };
    let config = ScenarioConfig::new(case, dispersion, a.n, 1, a.seed);
    let sim = config.simulate(a.n, a.seed)?;
    let mut text = header(&json!({ "command": "simulate", "args": a }));
    let mut head = vec!["y".to_string()];
    head.extend(sim.data.columns().iter().map(|c| c.name.clone()));
    match &sim.truth {
        Truth::Dw(_) => head.extend(["true_q".into(), "true_beta".into()]),
        Truth::NegBin(_) => head.extend(["true_mu".into(), "true_sigma".into()]),
    }
    let _ = writeln!(text, "{}", head.join(","));
    for i in 0..sim.data.len() {
        let mut cells = vec![sim.data.y()[i].to_string()];
        cells.extend(sim.data.columns().iter().map(|c| c.values[i].to_string()));
        match &sim.truth {
            Truth::Dw(ps) => {
                cells.push(ps[i].q().to_string());
                cells.push(ps[i].beta().to_string());
            }
            Truth::NegBin(ps) => {
                cells.push(ps[i].mu.to_string());
                cells.push(ps[i].sigma.to_string());
            }
        }
        let _ = writeln!(text, "{}", cells.join(","));
    }
    fs::write(&a.out, text)?;
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs) -> CliResult<()> {
    let text = at_path(&a.config, fs::read_to_string(&a.config).map_err(Error::from))?;
    let config: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad benchmark config: {e}")))?;
    let report = match a.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be at least 1")),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::usage(e.to_string()))?
            .install(|| run_benchmark(&config))?,
        None => run_benchmark(&config)?,
    };
    fs::write(&a.out, report.to_tsv())?;
    if let Some(raw) = &a.raw {
        fs::write(raw, serde_json::to_string_pretty(&report)?)?;
    }
    print!("{}", report.to_tsv());
    Ok(())
}
