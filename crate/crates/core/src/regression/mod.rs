//! Maximum-likelihood discrete Weibull regression with additive links on
//! both parameters:
//!
//! ```text
//! ln(-ln q(x)) = X_q theta
//! ln beta(x)   = X_beta vartheta
//! ```
//!
//! where each design is built from per-covariate truncated-power bases (see
//! [`crate::basis`]).

mod fit;
mod io;
mod likelihood;
mod residuals;
mod select;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{build_design, CovariateSpec, DesignPair, ScalingRecord};
use crate::data::{ColumnKind, Dataset};
use crate::distribution::DWParams;
use crate::error::{Error, Result};
use crate::stats::two_sided_p;

pub use fit::{aliased_columns, fit, FitOptions, GradientMethod};
pub(crate) use fit::covariance_from_hessian;
pub use io::{load_model, save_model, ModelFile, FORMAT_VERSION};
pub use likelihood::{link_eval, neg_loglik, neg_loglik_gradient};
pub use residuals::{randomized_quantile_residuals, residual_normality, NormalityReport};
pub use select::{stepwise_select, StepwiseOptions, StepwiseResult, TraceEntry};

pub(crate) use likelihood::DwObjective;

/// Covariate bases for the two links.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Terms of `ln(-ln q)`.
    pub q: Vec<CovariateSpec>,
    /// Terms of `ln beta`.
    pub beta: Vec<CovariateSpec>,
}

impl ModelSpec {
    pub fn intercept_only() -> Self {
        Self::default()
    }

    /// Linear terms for every listed covariate in both links.
    pub fn linear(covariates: &[(&str, ColumnKind)]) -> Self {
        let terms: Vec<_> = covariates
            .iter()
            .map(|(name, kind)| CovariateSpec::linear(*name, *kind))
            .collect();
        Self {
            q: terms.clone(),
            beta: terms,
        }
    }

    /// Every covariate name referenced by either link, in first-use order.
    pub fn covariates(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for s in self.q.iter().chain(&self.beta) {
            if !names.contains(&s.covariate.as_str()) {
                names.push(&s.covariate);
            }
        }
        names
    }

    pub fn num_columns(&self) -> (usize, usize) {
        let width = |specs: &[CovariateSpec]| 1 + specs.iter().map(CovariateSpec::width).sum::<usize>();
        (width(&self.q), width(&self.beta))
    }
}

fn write_terms(f: &mut fmt::Formatter<'_>, specs: &[CovariateSpec]) -> fmt::Result {
    if specs.is_empty() {
        return write!(f, "1");
    }
    for (i, s) in specs.iter().enumerate() {
        if i > 0 {
            write!(f, "+")?;
        }
        write!(f, "{}", s.covariate)?;
        if s.degree != 1 || s.num_knots != 0 {
            write!(f, ":d{}k{}", s.degree, s.num_knots)?;
        }
    }
    Ok(())
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q=")?;
        write_terms(f, &self.q)?;
        write!(f, ", beta=")?;
        write_terms(f, &self.beta)
    }
}

fn parse_term(term: &str) -> Result<Option<CovariateSpec>> {
    let bad = || Error::InvalidSpec(format!("cannot parse term `{term}`"));
    if term == "1" {
        return Ok(None);
    }
    let (name, shape) = match term.split_once(':') {
        Some((n, s)) => (n.trim(), Some(s.trim())),
        None => (term, None),
    };
    if name.is_empty() {
        return Err(bad());
    }
    let mut degree = 1;
    let mut knots = 0;
    if let Some(shape) = shape {
        let mut rest = shape;
        if let Some(after) = rest.strip_prefix('d') {
            let end = after.find(|c: char| !c.is_ascii_digit()).unwrap_or(after.len());
            degree = after[..end].parse().map_err(|_| bad())?;
            rest = &after[end..];
        }
        if let Some(after) = rest.strip_prefix('k') {
            knots = after.parse().map_err(|_| bad())?;
            rest = "";
        }
        if !rest.is_empty() {
            return Err(bad());
        }
    }
    Ok(Some(CovariateSpec::spline(name, degree, knots)))
}

/// Compact syntax, e.g. `q=x1:d2k3+x2, beta=x1`. A term without a shape is
/// linear; `1` (or an omitted link) means intercept only. Column kinds are
/// taken from the data when the model is fitted.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = ModelSpec::default();
        for part in s.split([',', ';']).map(str::trim).filter(|p| !p.is_empty()) {
            let (link, terms) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected `link=terms`, got `{part}`")))?;
            let parsed: Vec<CovariateSpec> = terms
                .split('+')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(parse_term)
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            match link.trim() {
                "q" => spec.q = parsed,
                "beta" | "b" => spec.beta = parsed,
                other => return Err(Error::InvalidSpec(format!("unknown link `{other}`"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Q,
    Beta,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Q => "q",
            Link::Beta => "beta",
        })
    }
}

/// Square matrix stored row-major with its dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub dim: usize,
    pub row_major: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            dim: m.nrows(),
            row_major: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.row_major)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row_major[i * self.dim + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    /// Resolved spec: knots are filled in and kinds match the data.
    pub spec: ModelSpec,
    pub q_labels: Vec<String>,
    pub beta_labels: Vec<String>,
    pub theta: Vec<f64>,
    pub vartheta: Vec<f64>,
    /// Which entries of `(theta, vartheta)` were estimated; aliased columns
    /// and a fixed shape are held at their stored values.
    pub free: Vec<bool>,
    /// Covariance over `(theta, vartheta)`; zero rows for held parameters.
    pub covariance: Option<CovarianceMatrix>,
    /// The observed information was not positive definite and its
    /// eigenvalues were floored.
    pub covariance_floored: bool,
    pub loglik: f64,
    pub aic: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub scaling: Option<ScalingRecord>,
    pub training_ranges: BTreeMap<String, (f64, f64)>,
    pub warnings: Vec<String>,
}

/// One row of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub link: Link,
    pub label: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

pub fn significance_code(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => ".",
        _ => "",
    }
}

impl FittedModel {
    pub fn num_params(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.vartheta).copied().collect()
    }

    /// Rebuilds both designs for `data` using the stored spec and scaling.
    pub fn designs_for(&self, data: &Dataset) -> Result<DesignPair> {
        Ok(DesignPair {
            q: build_design(data, &self.spec.q, self.scaling.as_ref())?,
            beta: build_design(data, &self.spec.beta, self.scaling.as_ref())?,
        })
    }

    /// Fitted parameters for every row of `data`.
    pub fn params_for(&self, data: &Dataset) -> Result<Vec<DWParams>> {
        link_eval(&self.designs_for(data)?, &self.theta, &self.vartheta)
    }

    /// Wald inference: `se = sqrt(cov_ii)`, `z = coef / se`, two-sided normal p.
    pub fn standard_errors(&self) -> Result<Vec<CoefficientRow>> {
        let cov = self.covariance.as_ref().ok_or(Error::CovarianceUnavailable)?;
        let labels = self
            .q_labels
            .iter()
            .map(|l| (Link::Q, l))
            .chain(self.beta_labels.iter().map(|l| (Link::Beta, l)));
        Ok(labels
            .zip(self.coefficients())
            .enumerate()
            .map(|(i, ((link, label), estimate))| {
                let var = cov.get(i, i);
                let std_error = (self.free[i] && var > 0.0).then(|| var.sqrt());
                let z = std_error.map(|se| estimate / se);
                CoefficientRow {
                    link,
                    label: label.clone(),
                    estimate,
                    std_error,
                    z,
                    p_value: z.map(two_sided_p),
                }
            })
            .collect())
    }

    /// Coefficient table in the familiar regression-summary layout.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model: {}\n", self.spec));
        out.push_str(&format!(
            "n = {}, logLik = {:.4}, AIC = {:.4}, params = {}, converged = {}\n",
            self.n,
            self.loglik,
            self.aic,
            self.num_params(),
            self.converged
        ));
        out.push_str(&format!(
            "{:<6} {:<28} {:>12} {:>12} {:>9} {:>10}\n",
            "link", "term", "estimate", "std.error", "z", "p"
        ));
        let rows = self.standard_errors().unwrap_or_else(|_| {
            self.q_labels
                .iter()
                .map(|l| (Link::Q, l))
                .chain(self.beta_labels.iter().map(|l| (Link::Beta, l)))
                .zip(self.coefficients())
                .map(|((link, label), estimate)| CoefficientRow {
                    link,
                    label: label.clone(),
                    estimate,
                    std_error: None,
                    z: None,
                    p_value: None,
                })
                .collect()
        });
        let na = |v: Option<f64>, prec: usize| v.map_or("NA".to_string(), |v| format!("{v:.prec$}"));
        for r in rows {
            out.push_str(&format!(
                "{:<6} {:<28} {:>12.5} {:>12} {:>9} {:>10} {}\n",
                r.link.to_string(),
                r.label,
                r.estimate,
                na(r.std_error, 5),
                na(r.z, 3),
                r.p_value.map_or("NA".to_string(), |p| format!("{p:.3e}")),
                r.p_value.map_or("", significance_code),
            ));
        }
        out.push_str("Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n");
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}
