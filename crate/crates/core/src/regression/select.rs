//! Forward stepwise search over spline complexity, scored by AIC.
//!
//! Starting from linear terms, each step tries raising the (degree, knots)
//! of one continuous covariate at a time, applying the same complexity in
//! both links. The best proposal is accepted only if it lowers the AIC.

use rayon::prelude::*;
use serde::Serialize;

use super::{fit, FitOptions, FittedModel, ModelSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseOptions {
    pub max_degree: u32,
    pub max_knots: u32,
    pub fit: FitOptions,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        Self {
            max_degree: 3,
            max_knots: 3,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub step: usize,
    pub spec: String,
    pub aic: Option<f64>,
    pub loglik: Option<f64>,
    pub num_params: Option<usize>,
    pub accepted: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub model: FittedModel,
    /// Every candidate evaluated, in order; accepted entries form the path.
    pub trace: Vec<TraceEntry>,
}

impl StepwiseResult {
    /// The accepted models, starting with the base fit.
    pub fn path(&self) -> Vec<&TraceEntry> {
        self.trace.iter().filter(|t| t.accepted).collect()
    }
}

fn complexity(spec: &ModelSpec, covariate: &str) -> Option<(u32, u32)> {
    spec.q
        .iter()
        .chain(&spec.beta)
        .find(|s| s.covariate == covariate)
        .map(|s| (s.degree, s.num_knots))
}

fn with_complexity(spec: &ModelSpec, covariate: &str, degree: u32, knots: u32) -> ModelSpec {
    let mut out = spec.clone();
    for s in out.q.iter_mut().chain(out.beta.iter_mut()) {
        if s.covariate == covariate {
            s.degree = degree;
            s.num_knots = knots;
            s.knots = None;
        }
    }
    out
}

pub fn stepwise_select(
    data: &Dataset,
    base_spec: &ModelSpec,
    continuous: &[String],
    options: &StepwiseOptions,
) -> Result<StepwiseResult> {
    for name in continuous {
        if complexity(base_spec, name).is_none() {
            return Err(Error::InvalidSpec(format!(
                "stepwise covariate `{name}` is not in the base model"
            )));
        }
    }
    let mut current_spec = base_spec.clone();
    let mut current = fit(data, &current_spec, &options.fit)?;
    let mut trace = vec![TraceEntry {
        step: 0,
        spec: current_spec.to_string(),
        aic: Some(current.aic),
        loglik: Some(current.loglik),
        num_params: Some(current.num_params()),
        accepted: true,
        note: None,
    }];

    for step in 1.. {
        let mut candidates = Vec::new();
        for (order, name) in continuous.iter().enumerate() {
            let (d0, k0) = complexity(&current_spec, name).expect("checked above");
            for d in d0.max(1)..=options.max_degree {
                for k in k0..=options.max_knots {
                    if (d, k) != (d0, k0) {
                        candidates.push((order, with_complexity(&current_spec, name, d, k)));
                    }
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let results: Vec<_> = candidates
            .par_iter()
            .map(|(order, spec)| (*order, spec, fit(data, spec, &options.fit)))
            .collect();

        let mut best: Option<(usize, &ModelSpec, FittedModel)> = None;
        let mut entries = Vec::new();
        for (order, spec, res) in results {
            match res {
                Ok(m) => {
                    entries.push(TraceEntry {
                        step,
                        spec: spec.to_string(),
                        aic: Some(m.aic),
                        loglik: Some(m.loglik),
                        num_params: Some(m.num_params()),
                        accepted: false,
                        note: (!m.converged).then(|| "did not converge".to_string()),
                    });
                    // Lowest AIC, then fewer parameters, then covariate order.
                    let wins = match &best {
                        None => true,
                        Some((bo, _, b)) => {
                            (m.aic, m.num_params(), order) < (b.aic, b.num_params(), *bo)
                        }
                    };
                    if m.aic.is_finite() && wins {
                        best = Some((order, spec, m));
                    }
                }
                Err(e) => entries.push(TraceEntry {
                    step,
                    spec: spec.to_string(),
                    aic: None,
                    loglik: None,
                    num_params: None,
                    accepted: false,
                    note: Some(format!("fit failed: {e}")),
                }),
            }
        }
        match best {
            Some((_, spec, m)) if m.aic < current.aic => {
                let accepted = spec.to_string();
                for e in entries.iter_mut() {
                    e.accepted = e.spec == accepted;
                }
                trace.extend(entries);
                current_spec = spec.clone();
                current = m;
            }
            _ => {
                trace.extend(entries);
                break;
            }
        }
    }
    Ok(StepwiseResult {
        model: current,
        trace,
    })
}
