//! Data-generating processes for the benchmark: four discrete Weibull
//! regression cases in an over- and an under-dispersed variant, and a
//! negative binomial model whose dispersion depends on a covariate that
//! does not move the mean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::NegativeBinomial;

use crate::basis::{build_design, CovariateSpec, DesignPair};
use crate::data::{Column, ColumnKind, Dataset};
use crate::distribution::{continuous_quantile, quantile, sample_one, DWParams};
use crate::error::{Error, Result};
use crate::regression::{link_eval, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DwCase {
    /// Linear `q` link, constant shape.
    #[serde(rename = "1")]
    LinearQ,
    /// Linear links on both parameters.
    #[serde(rename = "2")]
    LinearBoth,
    /// Cubic spline `q` link, constant shape.
    #[serde(rename = "3")]
    SplineQ,
    /// Cubic spline links on both parameters.
    #[serde(rename = "4")]
    SplineBoth,
}

impl DwCase {
    pub const ALL: [DwCase; 4] = [DwCase::LinearQ, DwCase::LinearBoth, DwCase::SplineQ, DwCase::SplineBoth];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(DwCase::LinearQ),
            2 => Ok(DwCase::LinearBoth),
            3 => Ok(DwCase::SplineQ),
            4 => Ok(DwCase::SplineBoth),
            _ => Err(Error::InvalidSpec(format!("no simulation case {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    /// Variant (a).
    #[serde(alias = "a")]
    Over,
    /// Variant (b).
    #[serde(alias = "b")]
    Under,
}

impl Dispersion {
    pub fn letter(self) -> char {
        match self {
            Dispersion::Over => 'a',
            Dispersion::Under => 'b',
        }
    }

    pub fn from_letter(s: &str) -> Result<Self> {
        match s {
            "a" | "over" => Ok(Dispersion::Over),
            "b" | "under" => Ok(Dispersion::Under),
            _ => Err(Error::InvalidSpec(format!("unknown dispersion variant `{s}`"))),
        }
    }
}

/// Knot locations for the spline cases.
pub const SPLINE_KNOTS: [f64; 3] = [0.25, 0.5, 0.75];

const COVARIATE: &str = "x";

/// The data-generating model of a case: spec plus true coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DwTruth {
    pub spec: ModelSpec,
    pub theta: Vec<f64>,
    pub vartheta: Vec<f64>,
}

fn cubic_spline_term() -> CovariateSpec {
    CovariateSpec::spline(COVARIATE, 3, 3).with_knots(SPLINE_KNOTS.to_vec())
}

pub fn dw_truth(case: DwCase, dispersion: Dispersion) -> DwTruth {
    let linear = || CovariateSpec::linear(COVARIATE, ColumnKind::Continuous);
    let over = dispersion == Dispersion::Over;
    let linear_q = vec![-5.0, -3.0];
    let spline_q = vec![-5.0, -5.0, -6.0, -4.0, -8.0, -9.0, -8.0];
    let constant_beta = vec![if over { 0.9 } else { 1.6 }];
    match case {
        DwCase::LinearQ => DwTruth {
            spec: ModelSpec {
                q: vec![linear()],
                beta: vec![],
            },
            theta: linear_q,
            vartheta: constant_beta,
        },
        DwCase::LinearBoth => DwTruth {
            spec: ModelSpec {
                q: vec![linear()],
                beta: vec![linear()],
            },
            theta: linear_q,
            vartheta: if over { vec![0.6, 0.3] } else { vec![1.1, 0.5] },
        },
        DwCase::SplineQ => DwTruth {
            spec: ModelSpec {
                q: vec![cubic_spline_term()],
                beta: vec![],
            },
            theta: spline_q,
            vartheta: constant_beta,
        },
        DwCase::SplineBoth => DwTruth {
            spec: ModelSpec {
                q: vec![cubic_spline_term()],
                beta: vec![cubic_spline_term()],
            },
            theta: spline_q,
            vartheta: if over {
                vec![0.9, 0.7, 0.9, 0.8, 0.9, 1.0, 0.9]
            } else {
                vec![1.6, 1.3, 1.5, 1.6, 1.6, 1.6, 1.6]
            },
        },
    }
}

/// Negative binomial parameters with variance `mu + sigma mu^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbParams {
    pub mu: f64,
    pub sigma: f64,
}

impl NbParams {
    pub fn distribution(&self) -> NegativeBinomial {
        let r = 1.0 / self.sigma;
        NegativeBinomial::new(r, r / (r + self.mu)).expect("valid negative binomial")
    }

    /// Smallest `m` with `P(Y <= m) >= tau`.
    pub fn quantile(&self, tau: f64) -> u64 {
        super::baselines::count_quantile(self.mu, self.sigma, tau).expect("valid negative binomial")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let shape = 1.0 / self.sigma;
        let rate = Gamma::new(shape, self.sigma * self.mu)
            .expect("valid gamma")
            .sample(rng);
        if rate <= 0.0 {
            return 0;
        }
        Poisson::new(rate).expect("valid poisson").sample(rng) as u64
    }
}

/// The true conditional distribution of every simulated row.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Dw(Vec<DWParams>),
    NegBin(Vec<NbParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    pub truth: Truth,
}

impl SimulatedData {
    /// True integer `tau`-quantile of every row.
    pub fn true_quantiles(&self, tau: f64) -> Result<Vec<u64>> {
        match &self.truth {
            Truth::Dw(ps) => ps.iter().map(|p| quantile(tau, p)).collect(),
            Truth::NegBin(ps) => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(Error::ProbabilityDomain(tau));
                }
                Ok(ps.iter().map(|p| p.quantile(tau)).collect())
            }
        }
    }

    /// True continuous quantiles; only defined for discrete Weibull truth.
    pub fn true_continuous_quantiles(&self, tau: f64) -> Result<Option<Vec<f64>>> {
        match &self.truth {
            Truth::Dw(ps) => ps
                .iter()
                .map(|p| continuous_quantile(tau, p))
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Truth::NegBin(_) => Ok(None),
        }
    }
}

/// Simulates `n` rows from case `case`, variant `dispersion`, with
/// `X ~ Uniform(0, 1)` and responses drawn by inverse-cdf sampling.
pub fn gen_dw_case(case: DwCase, dispersion: Dispersion, n: usize, seed: u64) -> Result<SimulatedData> {
    let truth = dw_truth(case, dispersion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let covariates = Dataset::new(vec![0; n], vec![Column::continuous(COVARIATE, x.clone())])?;
    let designs = DesignPair {
        q: build_design(&covariates, &truth.spec.q, None)?,
        beta: build_design(&covariates, &truth.spec.beta, None)?,
    };
    let params = link_eval(&designs, &truth.theta, &truth.vartheta)?;
    let y = params.iter().map(|p| sample_one(p, &mut rng)).collect();
    Ok(SimulatedData {
        data: Dataset::new(y, vec![Column::continuous(COVARIATE, x)])?,
        truth: Truth::Dw(params),
    })
}

/// Simulates the negative binomial tail-effect design:
/// `ln mu = 0.3 + 0.7 x1`, `ln sigma = -2 + 2 x2`, `X1, X2 ~ Uniform(0, 1)`.
pub fn gen_nb_tail(n: usize, seed: u64) -> Result<SimulatedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let p = NbParams {
            mu: (0.3 + 0.7 * a).exp(),
            sigma: (-2.0 + 2.0 * b).exp(),
        };
        y.push(p.sample(&mut rng));
        x1.push(a);
        x2.push(b);
        params.push(p);
    }
    Ok(SimulatedData {
        data: Dataset::new(
            y,
            vec![Column::continuous("x1", x1), Column::continuous("x2", x2)],
        )?,
        truth: Truth::NegBin(params),
    })
}

/// Model spec used to fit the tail-effect data: linear in both covariates
/// for both parameters.
pub fn nb_tail_spec() -> ModelSpec {
    ModelSpec::linear(&[("x1", ColumnKind::Continuous), ("x2", ColumnKind::Continuous)])
}
