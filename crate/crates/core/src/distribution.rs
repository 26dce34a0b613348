//! Discrete Weibull (type 1) distribution kernels.
//!
//! The distribution has survival function `P(Y >= y) = q^(y^beta)` on the
//! non-negative integers. Internally the parameter `q` is carried as
//! `lambda = -ln q`, which is what the regression link produces directly and
//! which keeps full precision when `q` is within a rounding error of one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The `(q, beta)` pair of one discrete Weibull distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DWParams {
    neg_log_q: f64,
    beta: f64,
}

impl DWParams {
    pub fn new(q: f64, beta: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::ParameterDomain { q, beta });
        }
        Ok(Self {
            neg_log_q: -q.ln(),
            beta,
        })
    }

    /// Builds parameters from `lambda = -ln q`, which must be positive and finite.
    pub fn from_neg_log_q(neg_log_q: f64, beta: f64) -> Result<Self> {
        if !(neg_log_q > 0.0 && neg_log_q.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::ParameterDomain {
                q: (-neg_log_q).exp(),
                beta,
            });
        }
        Ok(Self { neg_log_q, beta })
    }

    /// Builds parameters from the two linear predictors of the regression
    /// model: `eta = ln(-ln q)` and `zeta = ln beta`.
    pub fn from_links(eta: f64, zeta: f64) -> Result<Self> {
        Self::from_neg_log_q(eta.exp(), zeta.exp())
    }

    pub fn q(&self) -> f64 {
        (-self.neg_log_q).exp()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn neg_log_q(&self) -> f64 {
        self.neg_log_q
    }

    /// `P(Y >= y) = q^(y^beta)` for `y >= 0`.
    fn survival(&self, y: f64) -> f64 {
        (-self.scaled_power(y)).exp()
    }

    /// `lambda * y^beta`, computed in log space so that huge `y^beta`
    /// paired with tiny `lambda` stays finite.
    fn scaled_power(&self, y: f64) -> f64 {
        (self.neg_log_q.ln() + self.beta * y.ln()).exp()
    }
}

/// Truncation policy for the moment series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    pub tail_tolerance: f64,
    pub max_support: u64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            tail_tolerance: 1e-14,
            max_support: 10_000_000,
        }
    }
}

/// A series-evaluated moment together with the truncation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    /// Set when `max_support` was reached before the tail criterion.
    pub truncated: bool,
}

/// `ln(1 - exp(-x))` for `x > 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x <= std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// `ln(exp(x) - 1)` for `x > 0`.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln((y+1)^beta - y^beta)`, evaluated without cancellation for large `y`.
pub(crate) fn ln_power_increment(y: u64, beta: f64) -> f64 {
    if y == 0 {
        return 0.0;
    }
    let y = y as f64;
    beta * y.ln() + ln_expm1(beta * (1.0 / y).ln_1p())
}

pub fn pmf(y: u64, p: &DWParams) -> f64 {
    log_pmf(y, p).exp()
}

/// Log of the probability mass, `y^beta ln q + ln(1 - q^((y+1)^beta - y^beta))`.
pub fn log_pmf(y: u64, p: &DWParams) -> f64 {
    let ln_lambda = p.neg_log_q.ln();
    let head = if y == 0 { 0.0 } else { -p.scaled_power(y as f64) };
    head + log1m_exp((ln_lambda + ln_power_increment(y, p.beta)).exp())
}

pub fn cdf(y: i64, p: &DWParams) -> f64 {
    if y < 0 {
        return 0.0;
    }
    -(-p.scaled_power((y + 1) as f64)).exp_m1()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityDomain(tau))
    }
}

/// Unrounded quantile `(ln(1 - tau) / ln q)^(1/beta) - 1`.
///
/// Negative for `tau < 1 - q`, where the integer quantile is zero.
pub fn continuous_quantile(tau: f64, p: &DWParams) -> Result<f64> {
    check_tau(tau)?;
    Ok(continuous_quantile_unchecked(tau, p))
}

fn continuous_quantile_unchecked(tau: f64, p: &DWParams) -> f64 {
    (-(-tau).ln_1p() / p.neg_log_q).powf(1.0 / p.beta) - 1.0
}

/// Smallest non-negative integer `m` with `cdf(m) >= tau`.
pub fn quantile(tau: f64, p: &DWParams) -> Result<u64> {
    check_tau(tau)?;
    Ok(quantile_unchecked(tau, p))
}

fn quantile_unchecked(tau: f64, p: &DWParams) -> u64 {
    let c = continuous_quantile_unchecked(tau, p).ceil().max(0.0);
    if c >= u64::MAX as f64 {
        return u64::MAX;
    }
    let mut m = c as u64;
    // The closed form can land one step off when tau sits on a cdf jump.
    if cdf(m as i64, p) < tau {
        m += 1;
    } else if m > 0 && cdf(m as i64 - 1, p) >= tau {
        m -= 1;
    }
    m
}

pub fn median(p: &DWParams) -> u64 {
    quantile_unchecked(0.5, p)
}

/// Partial sums `(sum q^(y^beta), sum (2y-1) q^(y^beta))` over `y >= 1`.
fn moment_series(p: &DWParams, opts: &MomentOptions) -> (f64, f64, bool) {
    // Past the 1 - 1e-12 quantile the remaining mass is negligible.
    let floor = continuous_quantile_unchecked(1.0 - 1e-12, p).ceil().max(1.0);
    let mut first = 0.0;
    let mut second = 0.0;
    let mut y: u64 = 1;
    loop {
        let yf = y as f64;
        let term = p.survival(yf);
        first += term;
        second += (2.0 * yf - 1.0) * term;
        if (2.0 * yf - 1.0) * term < opts.tail_tolerance && yf > floor {
            return (first, second, false);
        }
        if y >= opts.max_support {
            return (first, second, true);
        }
        y += 1;
    }
}

/// `E(Y) = sum_{y>=1} q^(y^beta)`.
pub fn mean(p: &DWParams, opts: &MomentOptions) -> Moment {
    let (first, _, truncated) = moment_series(p, opts);
    Moment {
        value: first,
        truncated,
    }
}

/// `E(Y^2) - E(Y)^2` with `E(Y^2) = sum_{y>=1} (2y-1) q^(y^beta)`.
pub fn variance(p: &DWParams, opts: &MomentOptions) -> Moment {
    let (first, second, truncated) = moment_series(p, opts);
    Moment {
        value: (second - first * first).max(0.0),
        truncated,
    }
}

/// Variance-to-mean ratio: the dispersion relative to a Poisson with the
/// same mean. Above one is over-dispersion, below one under-dispersion.
pub fn dispersion_vs_poisson(p: &DWParams, opts: &MomentOptions) -> Result<Moment> {
    let (first, second, truncated) = moment_series(p, opts);
    if first <= 1e-300 {
        return Err(Error::Degenerate(format!(
            "mean {first:e} is numerically zero"
        )));
    }
    Ok(Moment {
        value: (second - first * first).max(0.0) / first,
        truncated,
    })
}

/// Draws `n` values by inverse-cdf sampling with a generator seeded from `seed`.
pub fn sample(p: &DWParams, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_one(p, &mut rng)).collect()
}

pub fn sample_one<R: Rng + ?Sized>(p: &DWParams, rng: &mut R) -> u64 {
    let u: f64 = rng.sample(Open01);
    quantile_unchecked(u, p)
}

/// Log-likelihood of the counts viewed as interval-censored observations
/// `[y, y+1)` of a continuous Weibull with cdf `1 - exp(-t^beta * (-ln q))`.
pub fn interval_censored_weibull_loglik(y: &[u64], p: &DWParams) -> f64 {
    // Cumulative hazard H(t) = t^beta * (-ln q); F(y+1) - F(y) = e^-H(y) (1 - e^-(H(y+1) - H(y))).
    let hazard = |t: f64| p.scaled_power(t);
    y.iter()
        .map(|&yi| {
            let lo = hazard(yi as f64);
            let hi = hazard(yi as f64 + 1.0);
            -lo + log1m_exp(hi - lo)
        })
        .sum()
}

/// Sum of `log_pmf` over a sample sharing one parameter pair.
pub fn log_likelihood(y: &[u64], p: &DWParams) -> f64 {
    y.iter().map(|&yi| log_pmf(yi, p)).sum()
}
