use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CovarianceMatrix, DwObjective, FittedModel, ModelSpec};
use crate::basis::{build_design, resolve_specs, DesignMatrix, ScalingRecord};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::optim::{central_gradient, fd_hessian, minimize, BfgsOptions, BfgsResult, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Analytic,
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of optimizer starts; the first is the moment-based initial
    /// value, the rest are jittered copies of it.
    pub starts: usize,
    pub jitter: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    /// Min-max scale continuous covariates before building the bases.
    pub scale_covariates: bool,
    /// Hold `beta` at this value instead of estimating the `beta` link.
    pub fixed_beta: Option<f64>,
    pub gradient: GradientMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 3,
            jitter: 0.1,
            seed: 0,
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            scale_covariates: false,
            fixed_beta: None,
            gradient: GradientMethod::Analytic,
        }
    }
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by sequential Gram-Schmidt with reorthogonalization.
pub fn aliased_columns(design: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut aliased = Vec::new();
    for j in 0..design.ncols() {
        let original = design.column(j).into_owned();
        let scale = original.norm();
        if scale == 0.0 {
            aliased.push(j);
            continue;
        }
        let mut v = original;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let residual = v.norm();
        if residual <= 1e-9 * scale {
            aliased.push(j);
        } else {
            basis.push(v / residual);
        }
    }
    aliased
}

fn drop_columns(m: &DMatrix<f64>, drop: &[usize]) -> DMatrix<f64> {
    if drop.is_empty() {
        return m.clone();
    }
    let keep: Vec<usize> = (0..m.ncols()).filter(|j| !drop.contains(j)).collect();
    m.select_columns(&keep)
}

struct FdObjective<'a>(DwObjective<'a>);

impl Objective for FdObjective<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.0.value(x)
    }
    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.0.value(x), central_gradient(|v| self.0.value(v), x))
    }
}

fn initial_point(data: &Dataset, q_cols: usize, beta_cols: Option<usize>) -> DVector<f64> {
    let zeros = data.y().iter().filter(|&&y| y == 0).count() as f64 / data.len() as f64;
    let q0 = (1.0 - zeros).clamp(0.01, 0.99);
    let mut x = DVector::zeros(q_cols + beta_cols.unwrap_or(0));
    x[0] = (-q0.ln()).ln();
    x
}

pub(crate) fn covariance_from_hessian(hess: &DMatrix<f64>) -> Option<(DMatrix<f64>, bool)> {
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(chol) = hess.clone().cholesky() {
        return Some((chol.inverse(), false));
    }
    let eig = hess.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    if !(top > 0.0) {
        return None;
    }
    let floor = top * 1e-8;
    let inv = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| 1.0 / l.max(floor)),
    );
    let v = &eig.eigenvectors;
    Some((v * DMatrix::from_diagonal(&inv) * v.transpose(), true))
}

/// Fits the model by quasi-Newton maximization of the likelihood.
///
/// A model that fails to converge is still returned, with `converged = false`.
pub fn fit(data: &Dataset, spec: &ModelSpec, options: &FitOptions) -> Result<FittedModel> {
    if data.is_empty() {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let mut warnings = Vec::new();
    let scaling = if options.scale_covariates {
        Some(ScalingRecord::from_data(data, spec.q.iter().chain(&spec.beta))?)
    } else {
        None
    };
    let resolved = ModelSpec {
        q: resolve_specs(data, &spec.q, scaling.as_ref())?,
        beta: resolve_specs(data, &spec.beta, scaling.as_ref())?,
    };
    let q_design = build_design(data, &resolved.q, scaling.as_ref())?;
    let beta_design = build_design(data, &resolved.beta, scaling.as_ref())?;
    let fixed_zeta = match options.fixed_beta {
        Some(b) if !(b > 0.0 && b.is_finite()) => {
            return Err(Error::ParameterDomain { q: f64::NAN, beta: b })
        }
        Some(b) => Some(b.ln()),
        None => None,
    };

    let alias_q = aliased_columns(&q_design.columns);
    let alias_b = if fixed_zeta.is_some() {
        Vec::new()
    } else {
        aliased_columns(&beta_design.columns)
    };
    for (link, design, alias) in [("q", &q_design, &alias_q), ("beta", &beta_design, &alias_b)] {
        for &j in alias.iter() {
            warnings.push(format!(
                "{link}-link column `{}` is aliased with earlier columns and was dropped",
                design.labels[j]
            ));
        }
    }
    let xq = drop_columns(&q_design.columns, &alias_q);
    let xb = drop_columns(&beta_design.columns, &alias_b);
    let k = xq.ncols() + if fixed_zeta.is_some() { 0 } else { xb.ncols() };
    if data.len() <= k {
        return Err(Error::TooFewObservations {
            needed: k + 1,
            got: data.len(),
        });
    }

    let objective = DwObjective {
        y: data.y(),
        q_design: &xq,
        beta_design: &xb,
        fixed_zeta,
    };
    let bfgs = BfgsOptions {
        max_iter: options.max_iter,
        grad_tol: options.grad_tol,
        rel_tol: options.rel_tol,
        hessian_start: true,
    };
    let x0 = initial_point(
        data,
        xq.ncols(),
        fixed_zeta.is_none().then_some(xb.ncols()),
    );
    let run = |start: DVector<f64>| -> BfgsResult {
        match options.gradient {
            GradientMethod::Analytic => minimize(&objective, start, &bfgs),
            GradientMethod::CentralDifference => {
                minimize(&FdObjective(DwObjective { ..objective }), start, &bfgs)
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let noise = Normal::new(0.0, options.jitter.max(0.0)).expect("finite jitter");
    let mut best: Option<BfgsResult> = None;
    for s in 0..options.starts.max(1) {
        let start = if s == 0 {
            x0.clone()
        } else {
            x0.map(|v| v + noise.sample(&mut rng))
        };
        let res = run(start);
        let better = match &best {
            None => true,
            Some(b) => res.value.is_finite() && (!b.value.is_finite() || res.value < b.value),
        };
        if better {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !best.value.is_finite() {
        warnings.push("optimizer never reached a finite likelihood".into());
    } else if !best.converged {
        warnings.push(format!(
            "optimizer did not converge (gradient inf-norm {:.3e})",
            best.gradient.amax()
        ));
    }

    let hess = fd_hessian(&objective, &best.x);
    let cov_reduced = covariance_from_hessian(&hess);
    let covariance_floored = matches!(cov_reduced, Some((_, true)));
    if cov_reduced.is_none() {
        warnings.push("observed information is singular; covariance unavailable".into());
    } else if covariance_floored {
        warnings.push("observed information not positive definite; eigenvalues floored".into());
    }

    // Map the reduced parameter vector back onto the full (theta, vartheta) layout.
    let pq = q_design.ncols();
    let pb = beta_design.ncols();
    let mut free = vec![true; pq + pb];
    for &j in &alias_q {
        free[j] = false;
    }
    for &j in &alias_b {
        free[pq + j] = false;
    }
    if fixed_zeta.is_some() {
        free[pq..].iter_mut().for_each(|f| *f = false);
    }
    let positions: Vec<usize> = (0..pq + pb).filter(|&i| free[i]).collect();
    let mut full = vec![0.0; pq + pb];
    for (r, &i) in positions.iter().enumerate() {
        full[i] = best.x[r];
    }
    if let Some(z) = fixed_zeta {
        full[pq] = z;
    }
    let covariance = cov_reduced.map(|(c, _)| {
        let mut m = DMatrix::zeros(pq + pb, pq + pb);
        for (r, &i) in positions.iter().enumerate() {
            for (s, &j) in positions.iter().enumerate() {
                m[(i, j)] = c[(r, s)];
            }
        }
        CovarianceMatrix::from_matrix(&m)
    });

    let mut training_ranges = BTreeMap::new();
    for name in resolved.covariates() {
        let col = data.column(name)?;
        let lo = col.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        training_ranges.insert(name.to_string(), (lo, hi));
    }

    let labels = |d: &DesignMatrix| d.labels.iter().map(ToString::to_string).collect();
    let loglik = -best.value;
    let num_params = positions.len();
    Ok(FittedModel {
        q_labels: labels(&q_design),
        beta_labels: labels(&beta_design),
        theta: full[..pq].to_vec(),
        vartheta: full[pq..].to_vec(),
        free,
        covariance,
        covariance_floored,
        loglik,
        aic: -2.0 * loglik + 2.0 * num_params as f64,
        n: data.len(),
        converged: best.converged && best.value.is_finite(),
        iterations: best.iterations,
        scaling,
        training_ranges,
        warnings,
        spec: resolved,
    })
}
