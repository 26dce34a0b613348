//! Poisson and negative binomial regressions used as benchmark competitors.
//!
//! Both are fitted by maximum likelihood with the same optimizer as the
//! discrete Weibull model. The Poisson mean link uses the `q`-link basis;
//! the negative binomial uses the `q`-link basis for `ln mu` and the
//! `beta`-link basis for `ln sigma`, with variance `mu + sigma mu^2`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{DiscreteCDF, NegativeBinomial, Poisson};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::basis::{build_design, resolve_specs};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optim::{fd_hessian, minimize, BfgsOptions, Objective};
use crate::regression::{covariance_from_hessian, CovarianceMatrix, FitOptions, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Poisson,
    NegBin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineFit {
    pub kind: BaselineKind,
    /// Resolved spec: `q` holds the mean terms, `beta` the dispersion terms.
    pub spec: ModelSpec,
    pub mu_labels: Vec<String>,
    pub mu_coef: Vec<f64>,
    /// Empty for Poisson.
    pub sigma_labels: Vec<String>,
    pub sigma_coef: Vec<f64>,
    pub covariance: Option<CovarianceMatrix>,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
}

impl BaselineFit {
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        let c = self.covariance.as_ref()?;
        Some((0..c.dim).map(|i| c.get(i, i).max(0.0).sqrt()).collect())
    }

    fn designs(&self, data: &Dataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            build_design(data, &self.spec.q, None)?.columns,
            build_design(data, &self.spec.beta, None)?.columns,
        ))
    }

    /// Integer `tau`-quantile for every row of `data`.
    pub fn quantiles(&self, data: &Dataset, tau: f64) -> Result<Vec<u64>> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::ProbabilityDomain(tau));
        }
        let (xm, xs) = self.designs(data)?;
        let log_mu = &xm * DVector::from_column_slice(&self.mu_coef);
        let log_sigma = match self.kind {
            BaselineKind::Poisson => DVector::from_element(data.len(), f64::NEG_INFINITY),
            BaselineKind::NegBin => &xs * DVector::from_column_slice(&self.sigma_coef),
        };
        (0..data.len())
            .map(|i| {
                let mu = log_mu[i].exp();
                count_quantile(mu, log_sigma[i].exp(), tau).ok_or(Error::Overflow { row: i })
            })
            .collect()
    }
}

/// Smallest `m` with `cdf(m) >= tau`, for a non-decreasing `cdf`.
pub(crate) fn discrete_quantile(cdf: impl Fn(u64) -> f64, tau: f64) -> u64 {
    if cdf(0) >= tau {
        return 0;
    }
    let mut lo = 0u64;
    let mut hi = 1u64;
    while cdf(hi) < tau {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return hi;
        }
    }
    // Invariant: cdf(lo) < tau <= cdf(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cdf(mid) >= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Integer `tau`-quantile of a negative binomial with variance
/// `mu + sigma mu^2`; `sigma` below `1e-10` is treated as Poisson.
pub(crate) fn count_quantile(mu: f64, sigma: f64, tau: f64) -> Option<u64> {
    if !(mu.is_finite() && mu > 0.0 && sigma.is_finite() && sigma >= 0.0) {
        return None;
    }
    if sigma < 1e-10 {
        let d = Poisson::new(mu).ok()?;
        return Some(discrete_quantile(|m| d.cdf(m), tau));
    }
    let d = nb_distribution(mu, sigma)?;
    Some(discrete_quantile(|m| d.cdf(m), tau))
}

fn nb_distribution(mu: f64, sigma: f64) -> Option<NegativeBinomial> {
    let r = 1.0 / sigma;
    if !(mu.is_finite() && mu > 0.0 && r.is_finite() && r > 0.0) {
        return None;
    }
    NegativeBinomial::new(r, r / (r + mu)).ok()
}

struct PoissonObjective<'a> {
    y: &'a [u64],
    x: &'a DMatrix<f64>,
    log_factorial: Vec<f64>,
}

impl Objective for PoissonObjective<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, b: &DVector<f64>) -> f64 {
        self.value_and_gradient(b).0
    }

    fn value_and_gradient(&self, b: &DVector<f64>) -> (f64, DVector<f64>) {
        let eta = self.x * b;
        let mut value = 0.0;
        let mut resid = DVector::zeros(self.y.len());
        for (i, &y) in self.y.iter().enumerate() {
            let mu = eta[i].exp();
            value += mu - y as f64 * eta[i] + self.log_factorial[i];
            resid[i] = mu - y as f64;
        }
        if !value.is_finite() {
            return (f64::INFINITY, DVector::zeros(b.len()));
        }
        (value, self.x.tr_mul(&resid))
    }
}

struct NegBinObjective<'a> {
    y: &'a [u64],
    xm: &'a DMatrix<f64>,
    xs: &'a DMatrix<f64>,
}

impl NegBinObjective<'_> {
    fn split(&self, b: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let pm = self.xm.ncols();
        (
            self.xm * b.rows(0, pm),
            self.xs * b.rows(pm, b.len() - pm),
        )
    }
}

/// Row log-likelihood and its derivatives with respect to `ln mu` and `ln sigma`.
fn nb_row(y: f64, log_mu: f64, log_sigma: f64) -> (f64, f64, f64) {
    let mu = log_mu.exp();
    let r = (-log_sigma).exp();
    let ll = ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0)
        + r * (r / (r + mu)).ln()
        + y * (mu / (r + mu)).ln();
    let d_log_mu = r * (y - mu) / (r + mu);
    let d_r = digamma(y + r) - digamma(r) + (r / (r + mu)).ln() + (mu - y) / (r + mu);
    (ll, d_log_mu, -r * d_r)
}

impl Objective for NegBinObjective<'_> {
    fn dim(&self) -> usize {
        self.xm.ncols() + self.xs.ncols()
    }

    fn value(&self, b: &DVector<f64>) -> f64 {
        self.value_and_gradient(b).0
    }

    fn value_and_gradient(&self, b: &DVector<f64>) -> (f64, DVector<f64>) {
        let (lm, ls) = self.split(b);
        let mut value = 0.0;
        let mut gm = DVector::zeros(self.y.len());
        let mut gs = DVector::zeros(self.y.len());
        for (i, &y) in self.y.iter().enumerate() {
            let (ll, dm, ds) = nb_row(y as f64, lm[i], ls[i]);
            value -= ll;
            gm[i] = -dm;
            gs[i] = -ds;
        }
        if !value.is_finite() {
            return (f64::INFINITY, DVector::zeros(b.len()));
        }
        let mut g = DVector::zeros(b.len());
        g.rows_mut(0, self.xm.ncols()).copy_from(&self.xm.tr_mul(&gm));
        g.rows_mut(self.xm.ncols(), self.xs.ncols()).copy_from(&self.xs.tr_mul(&gs));
        (value, g)
    }
}

fn bfgs_options(options: &FitOptions) -> BfgsOptions {
    BfgsOptions {
        max_iter: options.max_iter,
        grad_tol: options.grad_tol,
        rel_tol: options.rel_tol,
        hessian_start: true,
    }
}

fn labels(data: &Dataset, spec: &[crate::basis::CovariateSpec]) -> Result<Vec<String>> {
    Ok(build_design(data, spec, None)?
        .labels
        .iter()
        .map(ToString::to_string)
        .collect())
}

fn mean_response(data: &Dataset) -> f64 {
    data.y().iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64
}

/// Poisson regression with `ln mu` on the `q`-link terms of `spec`.
pub fn fit_poisson(data: &Dataset, spec: &ModelSpec, options: &FitOptions) -> Result<BaselineFit> {
    let resolved = ModelSpec {
        q: resolve_specs(data, &spec.q, None)?,
        beta: Vec::new(),
    };
    let x = build_design(data, &resolved.q, None)?.columns;
    if data.len() <= x.ncols() {
        return Err(Error::TooFewObservations {
            needed: x.ncols() + 1,
            got: data.len(),
        });
    }
    let obj = PoissonObjective {
        y: data.y(),
        x: &x,
        log_factorial: data.y().iter().map(|&y| ln_gamma(y as f64 + 1.0)).collect(),
    };
    let mut x0 = DVector::zeros(x.ncols());
    x0[0] = mean_response(data).max(1e-3).ln();
    let res = minimize(&obj, x0, &bfgs_options(options));
    let cov = covariance_from_hessian(&fd_hessian(&obj, &res.x));
    let loglik = -res.value;
    Ok(BaselineFit {
        kind: BaselineKind::Poisson,
        mu_labels: labels(data, &resolved.q)?,
        spec: resolved,
        mu_coef: res.x.iter().copied().collect(),
        sigma_labels: Vec::new(),
        sigma_coef: Vec::new(),
        covariance: cov.map(|(c, _)| CovarianceMatrix::from_matrix(&c)),
        loglik,
        aic: -2.0 * loglik + 2.0 * x.ncols() as f64,
        converged: res.converged && res.value.is_finite(),
    })
}

/// Negative binomial regression with `ln mu` on the `q`-link terms and
/// `ln sigma` on the `beta`-link terms of `spec`.
pub fn fit_negbin(data: &Dataset, spec: &ModelSpec, options: &FitOptions) -> Result<BaselineFit> {
    let resolved = ModelSpec {
        q: resolve_specs(data, &spec.q, None)?,
        beta: resolve_specs(data, &spec.beta, None)?,
    };
    let xm = build_design(data, &resolved.q, None)?.columns;
    let xs = build_design(data, &resolved.beta, None)?.columns;
    let k = xm.ncols() + xs.ncols();
    if data.len() <= k {
        return Err(Error::TooFewObservations {
            needed: k + 1,
            got: data.len(),
        });
    }
    // Start from the Poisson fit with a moment estimate of sigma.
    let pois = fit_poisson(data, spec, options)?;
    let ybar = mean_response(data);
    let var = data.y().iter().map(|&v| (v as f64 - ybar).powi(2)).sum::<f64>() / data.len() as f64;
    let sigma0 = ((var - ybar) / (ybar * ybar).max(1e-12)).clamp(0.01, 10.0);
    let mut x0 = DVector::zeros(k);
    x0.rows_mut(0, xm.ncols()).copy_from_slice(&pois.mu_coef);
    x0[xm.ncols()] = sigma0.ln();

    let obj = NegBinObjective {
        y: data.y(),
        xm: &xm,
        xs: &xs,
    };
    let res = minimize(&obj, x0, &bfgs_options(options));
    let cov = covariance_from_hessian(&fd_hessian(&obj, &res.x));
    let loglik = -res.value;
    Ok(BaselineFit {
        kind: BaselineKind::NegBin,
        mu_labels: labels(data, &resolved.q)?,
        sigma_labels: labels(data, &resolved.beta)?,
        spec: resolved,
        mu_coef: res.x.rows(0, xm.ncols()).iter().copied().collect(),
        sigma_coef: res.x.rows(xm.ncols(), xs.ncols()).iter().copied().collect(),
        covariance: cov.map(|(c, _)| CovarianceMatrix::from_matrix(&c)),
        loglik,
        aic: -2.0 * loglik + 2.0 * k as f64,
        converged: res.converged && res.value.is_finite(),
    })
}

/// Root-mean-square difference of two quantile vectors.
pub fn rmse(fitted: &[u64], truth: &[u64]) -> Result<f64> {
    if fitted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: fitted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let ss: f64 = fitted
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok((ss / truth.len() as f64).sqrt())
}
