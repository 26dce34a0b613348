//! Conditional quantiles, moments and partial effects from a fitted model.
//!
//! The continuous quantile `mu*(tau) = (ln(1 - tau) / ln q)^(1/beta) - 1`
//! satisfies `ln(mu* + 1) = (ln(-ln(1 - tau)) - eta) / beta`, which gives
//! closed-form derivatives with respect to both linear predictors. Partial
//! effects and their delta-method standard errors are built on that.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::basis::basis_columns;
use crate::basis::CovariateSpec;
use crate::data::{ColumnKind, Dataset};
use crate::distribution::{continuous_quantile, mean, median, quantile, DWParams, MomentOptions};
use crate::error::{Error, Result};
use crate::regression::FittedModel;

/// Covariate values for a single observation, by name.
pub type CovariateRow = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPrediction {
    pub params: DWParams,
    /// Some covariate lies outside the range seen during fitting.
    pub extrapolated: bool,
}

fn design_row(specs: &[CovariateSpec], model: &FittedModel, x: &CovariateRow) -> Result<Vec<f64>> {
    let mut row = vec![1.0];
    for spec in specs {
        let raw = *x
            .get(&spec.covariate)
            .ok_or_else(|| Error::MissingColumn(spec.covariate.clone()))?;
        let v = model
            .scaling
            .as_ref()
            .map_or(raw, |s| s.apply(&spec.covariate, raw));
        row.extend(basis_columns(&[v], spec)?.into_iter().map(|c| c[0]));
    }
    Ok(row)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Design rows and linear predictors at one covariate profile.
struct Point {
    q_row: Vec<f64>,
    beta_row: Vec<f64>,
    eta: f64,
    zeta: f64,
    extrapolated: bool,
}

fn evaluate(model: &FittedModel, x: &CovariateRow) -> Result<Point> {
    let q_row = design_row(&model.spec.q, model, x)?;
    let beta_row = design_row(&model.spec.beta, model, x)?;
    let eta = dot(&q_row, &model.theta);
    let zeta = dot(&beta_row, &model.vartheta);
    let extrapolated = model.training_ranges.iter().any(|(name, &(lo, hi))| {
        x.get(name).is_some_and(|&v| v < lo || v > hi)
    });
    Ok(Point {
        q_row,
        beta_row,
        eta,
        zeta,
        extrapolated,
    })
}

pub fn predict_params(model: &FittedModel, x: &CovariateRow) -> Result<ParamPrediction> {
    let pt = evaluate(model, x)?;
    let params = DWParams::from_links(pt.eta, pt.zeta).map_err(|_| Error::Overflow { row: 0 })?;
    Ok(ParamPrediction {
        params,
        extrapolated: pt.extrapolated,
    })
}

/// Integer and continuous conditional `tau`-quantile.
pub fn predict_quantile(model: &FittedModel, x: &CovariateRow, tau: f64) -> Result<(u64, f64)> {
    let p = predict_params(model, x)?.params;
    Ok((quantile(tau, &p)?, continuous_quantile(tau, &p)?))
}

pub fn predict_median(model: &FittedModel, x: &CovariateRow) -> Result<u64> {
    Ok(median(&predict_params(model, x)?.params))
}

pub fn predict_mean(model: &FittedModel, x: &CovariateRow, opts: &MomentOptions) -> Result<f64> {
    Ok(mean(&predict_params(model, x)?.params, opts).value)
}

/// Continuous quantile and its gradient with respect to `(theta, vartheta)`.
fn quantile_with_gradient(model: &FittedModel, pt: &Point, tau: f64) -> Result<(f64, DVector<f64>)> {
    let p = DWParams::from_links(pt.eta, pt.zeta).map_err(|_| Error::Overflow { row: 0 })?;
    let value = continuous_quantile(tau, &p)?;
    let beta = pt.zeta.exp();
    let level = value + 1.0;
    let log_c = (-(-tau).ln_1p()).ln();
    let d_eta = -level / beta;
    let d_zeta = -level * (log_c - pt.eta) / beta;
    let grad = DVector::from_iterator(
        model.theta.len() + model.vartheta.len(),
        pt.q_row
            .iter()
            .map(|v| v * d_eta)
            .chain(pt.beta_row.iter().map(|v| v * d_zeta)),
    );
    Ok((value, grad))
}

/// Baseline profile: continuous covariates at their sample mean, dummies at 0.
pub fn baseline_profile(model: &FittedModel, data: &Dataset) -> Result<CovariateRow> {
    model
        .spec
        .covariates()
        .into_iter()
        .map(|name| {
            let col = data.column(name)?;
            let v = match col.kind {
                ColumnKind::Continuous => col.mean(),
                ColumnKind::Dummy => 0.0,
            };
            Ok((name.to_string(), v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub covariate: String,
    pub effects: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    /// Delta-method Wald test at 5%; approximate.
    pub significant: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectTable {
    pub taus: Vec<f64>,
    pub rows: Vec<EffectRow>,
}

impl EffectTable {
    /// Tab-separated table, one row per covariate and one column per tau.
    /// Significant cells (approximate, delta method) carry a trailing `*`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("covariate");
        for t in &self.taus {
            let _ = write!(out, "\t{t}");
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.covariate);
            for (j, e) in row.effects.iter().enumerate() {
                let star = row
                    .significant
                    .as_ref()
                    .is_some_and(|s| s[j]);
                let _ = write!(out, "\t{e:.6}{}", if star { "*" } else { "" });
            }
            out.push('\n');
        }
        out
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if let Some(&bad) = taus.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::ProbabilityDomain(bad));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec("tau grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Effect of a one-unit increase of each listed covariate on the continuous
/// `tau`-quantile, measured from the baseline profile.
pub fn partial_effects(
    model: &FittedModel,
    data: &Dataset,
    taus: &[f64],
    covariates: &[String],
) -> Result<EffectTable> {
    check_taus(taus)?;
    let base = baseline_profile(model, data)?;
    let base_pt = evaluate(model, &base)?;
    let cov = model.covariance.as_ref().map(|c| c.to_matrix());
    let mut rows = Vec::with_capacity(covariates.len());
    for name in covariates {
        let mut bumped = base.clone();
        match bumped.get_mut(name) {
            Some(v) => *v += 1.0,
            None => {
                // Absent from both links: the data must still know the column.
                data.column(name)?;
                rows.push(EffectRow {
                    covariate: name.clone(),
                    effects: vec![0.0; taus.len()],
                    std_errors: cov.as_ref().map(|_| vec![0.0; taus.len()]),
                    significant: cov.as_ref().map(|_| vec![false; taus.len()]),
                });
                continue;
            }
        }
        let pt = evaluate(model, &bumped)?;
        let mut effects = Vec::with_capacity(taus.len());
        let mut ses = Vec::with_capacity(taus.len());
        for &tau in taus {
            let (v1, g1) = quantile_with_gradient(model, &pt, tau)?;
            let (v0, g0) = quantile_with_gradient(model, &base_pt, tau)?;
            effects.push(v1 - v0);
            if let Some(c) = &cov {
                let g = g1 - g0;
                ses.push((g.dot(&(c * &g))).max(0.0).sqrt());
            }
        }
        let significant = cov.as_ref().map(|_| {
            effects
                .iter()
                .zip(&ses)
                .map(|(e, se)| *se > 0.0 && (e / se).abs() > 1.959963984540054)
                .collect()
        });
        rows.push(EffectRow {
            covariate: name.clone(),
            effects,
            std_errors: cov.as_ref().map(|_| ses),
            significant,
        });
    }
    Ok(EffectTable {
        taus: taus.to_vec(),
        rows,
    })
}

/// Continuous quantile curves along one covariate, others at baseline.
/// Columns: the covariate value then one column per tau.
pub fn quantile_curves_tsv(
    model: &FittedModel,
    data: &Dataset,
    covariate: &str,
    grid: &[f64],
    taus: &[f64],
) -> Result<String> {
    check_taus(taus)?;
    let mut x = baseline_profile(model, data)?;
    let mut out = String::from(covariate);
    for t in taus {
        let _ = write!(out, "\t{t}");
    }
    out.push('\n');
    for &g in grid {
        x.insert(covariate.to_string(), g);
        let p = predict_params(model, &x)?.params;
        let _ = write!(out, "{g}");
        for &t in taus {
            let _ = write!(out, "\t{:.6}", continuous_quantile(t, &p)?);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Log-median-scale reading of a constant-shape model with linear `q` terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interpretation {
    /// `(ln ln 2 - theta_0) / beta`: `ln(median* + 1)` with all covariates at zero.
    pub baseline_log_median: Option<f64>,
    /// `-theta_p / beta` per covariate: change in `ln(median* + 1)` per unit.
    pub per_unit: Vec<(String, f64)>,
    pub note: Option<String>,
}

pub fn interpret_coefficients(model: &FittedModel) -> Interpretation {
    let simple = model.spec.beta.is_empty()
        && model.spec.q.iter().all(|s| s.degree == 1 && s.num_knots == 0);
    if !simple {
        return Interpretation {
            baseline_log_median: None,
            per_unit: Vec::new(),
            note: Some(
                "coefficients are not directly interpretable for this model; use partial effects"
                    .into(),
            ),
        };
    }
    let beta = model.vartheta[0].exp();
    let ln_ln_2 = std::f64::consts::LN_2.ln();
    Interpretation {
        baseline_log_median: Some((ln_ln_2 - model.theta[0]) / beta),
        per_unit: model
            .spec
            .q
            .iter()
            .zip(&model.theta[1..])
            .map(|(s, t)| (s.covariate.clone(), -t / beta))
            .collect(),
        note: None,
    }
}
