//! Link evaluation and the discrete Weibull log-likelihood with its
//! analytic gradient.
//!
//! With `lambda = exp(eta) = -ln q`, `beta = exp(zeta)`, `A = y^beta`,
//! `B = (y+1)^beta`, `D = B - A` and `E = expm1(lambda * D)`:
//!
//! ```text
//! ln f          = -lambda A + ln(1 - exp(-lambda D))
//! d ln f / deta = lambda (D / E - A)
//! d ln f / dzeta = -lambda beta (A ln y - (B ln(y+1) - A ln y) / E)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::basis::DesignPair;
use crate::distribution::{ln_power_increment, log1m_exp, DWParams};
use crate::error::{Error, Result};
use crate::optim::Objective;

/// Per-row log-density and its derivatives with respect to both linear predictors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowTerms {
    pub loglik: f64,
    pub d_eta: f64,
    pub d_zeta: f64,
}

pub(crate) fn row_loglik(y: u64, eta: f64, zeta: f64) -> f64 {
    row_terms(y, eta, zeta).loglik
}

/// Everything is carried in log space: `lambda A`, `lambda D` and the
/// numerators over `E` are exponentiated only at the end, so very large
/// `beta` gives zero probabilities rather than `inf - inf`.
pub(crate) fn row_terms(y: u64, eta: f64, zeta: f64) -> RowTerms {
    let lambda = eta.exp();
    let beta = zeta.exp();
    if y == 0 {
        // f(0) = 1 - q does not involve beta.
        return RowTerms {
            loglik: log1m_exp(lambda),
            d_eta: over_expm1(eta, lambda),
            d_zeta: 0.0,
        };
    }
    let yf = y as f64;
    let ln_y = yf.ln();
    let step = (1.0 / yf).ln_1p();
    let ln_a = beta * ln_y;
    let lam_a = (eta + ln_a).exp();
    let lam_d = (eta + ln_power_increment(y, beta)).exp();
    // ln(B ln(y+1) - A ln y)
    let ln_h = ln_a + beta * step + (yf.ln_1p() - ln_y * (-beta * step).exp()).ln();
    RowTerms {
        loglik: -lam_a + log1m_exp(lam_d),
        d_eta: over_expm1(eta + ln_power_increment(y, beta), lam_d) - lam_a,
        d_zeta: -beta * (lam_a * ln_y - over_expm1(eta + ln_h, lam_d)),
    }
}

/// `exp(ln_num) / expm1(x)` for `x > 0`.
fn over_expm1(ln_num: f64, x: f64) -> f64 {
    (ln_num - x).exp() / -(-x).exp_m1()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

fn predictors(
    designs: &DesignPair,
    theta: &[f64],
    vartheta: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len(designs.q.ncols(), theta.len())?;
    check_len(designs.beta.ncols(), vartheta.len())?;
    check_len(designs.q.nrows(), designs.beta.nrows())?;
    let eta = &designs.q.columns * DVector::from_column_slice(theta);
    let zeta = &designs.beta.columns * DVector::from_column_slice(vartheta);
    Ok((eta, zeta))
}

/// Evaluates both links row by row: `q = exp(-exp(eta))`, `beta = exp(zeta)`.
pub fn link_eval(designs: &DesignPair, theta: &[f64], vartheta: &[f64]) -> Result<Vec<DWParams>> {
    let (eta, zeta) = predictors(designs, theta, vartheta)?;
    eta.iter()
        .zip(zeta.iter())
        .enumerate()
        .map(|(row, (&e, &z))| {
            DWParams::from_links(e, z).map_err(|_| Error::Overflow { row })
        })
        .collect()
}

/// Negative log-likelihood `-sum ln f(y_i; q_i, beta_i)`.
pub fn neg_loglik(y: &[u64], designs: &DesignPair, theta: &[f64], vartheta: &[f64]) -> Result<f64> {
    let params = link_eval(designs, theta, vartheta)?;
    check_len(params.len(), y.len())?;
    Ok(-y
        .iter()
        .zip(&params)
        .map(|(&yi, p)| crate::distribution::log_pmf(yi, p))
        .sum::<f64>())
}

/// Negative log-likelihood with its analytic gradient split into the
/// `theta` and `vartheta` blocks.
pub fn neg_loglik_gradient(
    y: &[u64],
    designs: &DesignPair,
    theta: &[f64],
    vartheta: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (eta, zeta) = predictors(designs, theta, vartheta)?;
    check_len(eta.len(), y.len())?;
    let mut g_eta = DVector::zeros(y.len());
    let mut g_zeta = DVector::zeros(y.len());
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        if !eta[i].is_finite() || !zeta[i].is_finite() {
            return Err(Error::Overflow { row: i });
        }
        let t = row_terms(yi, eta[i], zeta[i]);
        total += t.loglik;
        g_eta[i] = -t.d_eta;
        g_zeta[i] = -t.d_zeta;
    }
    let gt = designs.q.columns.tr_mul(&g_eta);
    let gv = designs.beta.columns.tr_mul(&g_zeta);
    Ok((-total, gt.as_slice().to_vec(), gv.as_slice().to_vec()))
}

/// The fitting objective over the packed vector `(theta, vartheta)`, or
/// `theta` alone when the shape is held fixed.
pub(crate) struct DwObjective<'a> {
    pub y: &'a [u64],
    pub q_design: &'a DMatrix<f64>,
    pub beta_design: &'a DMatrix<f64>,
    /// Fixed `ln beta` for every row; the `vartheta` block is then absent.
    pub fixed_zeta: Option<f64>,
}

impl DwObjective<'_> {
    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.q_design.ncols();
        let eta = self.q_design * x.rows(0, p);
        let zeta = match self.fixed_zeta {
            Some(z) => DVector::from_element(self.y.len(), z),
            None => self.beta_design * x.rows(p, self.beta_design.ncols()),
        };
        (eta, zeta)
    }
}

impl Objective for DwObjective<'_> {
    fn dim(&self) -> usize {
        self.q_design.ncols()
            + if self.fixed_zeta.is_some() {
                0
            } else {
                self.beta_design.ncols()
            }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let (eta, zeta) = self.split(x);
        let mut total = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            total += row_loglik(yi, eta[i], zeta[i]);
        }
        if total.is_nan() {
            f64::INFINITY
        } else {
            -total
        }
    }

    fn value_and_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (eta, zeta) = self.split(x);
        let n = self.y.len();
        let mut g_eta = DVector::zeros(n);
        let mut g_zeta = DVector::zeros(n);
        let mut total = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            let t = row_terms(yi, eta[i], zeta[i]);
            total += t.loglik;
            g_eta[i] = -t.d_eta;
            g_zeta[i] = -t.d_zeta;
        }
        let value = if total.is_nan() { f64::INFINITY } else { -total };
        let gq = self.q_design.tr_mul(&g_eta);
        let grad = if self.fixed_zeta.is_some() {
            gq
        } else {
            let gb = self.beta_design.tr_mul(&g_zeta);
            DVector::from_iterator(gq.len() + gb.len(), gq.iter().chain(gb.iter()).copied())
        };
        (value, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::log_pmf;

    #[test]
    fn row_loglik_matches_log_pmf() {
        for &(y, eta, zeta) in &[(0u64, -1.0, 0.3), (3, -2.0, 0.5), (40, -6.0, 0.1), (1, 0.5, -1.0)] {
            let p = DWParams::from_links(eta, zeta).unwrap();
            let want = log_pmf(y, &p);
            assert!((row_loglik(y, eta, zeta) - want).abs() < 1e-12 * want.abs().max(1.0));
            assert!((row_terms(y, eta, zeta).loglik - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn row_derivatives_match_differences() {
        let h = 1e-6;
        for &(y, eta, zeta) in &[(0u64, -1.0, 0.3), (3, -2.0, 0.5), (12, -4.0, 0.9), (2, 1.0, -0.7)] {
            let t = row_terms(y, eta, zeta);
            let de = (row_loglik(y, eta + h, zeta) - row_loglik(y, eta - h, zeta)) / (2.0 * h);
            let dz = (row_loglik(y, eta, zeta + h) - row_loglik(y, eta, zeta - h)) / (2.0 * h);
            assert!((t.d_eta - de).abs() < 1e-6 * de.abs().max(1.0), "{y}: {} vs {de}", t.d_eta);
            assert!((t.d_zeta - dz).abs() < 1e-6 * dz.abs().max(1.0), "{y}: {} vs {dz}", t.d_zeta);
        }
    }
}
