use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::FittedModel;
use crate::data::Dataset;
use crate::distribution::cdf;
use crate::error::{Error, Result};
use crate::stats::{ks_test, normal_cdf, normal_quantile};

/// Randomized quantile residuals `Phi^-1(u_i)` with `u_i` uniform on
/// `(F(y_i - 1), F(y_i)]` under the fitted row parameters.
pub fn randomized_quantile_residuals(
    model: &FittedModel,
    data: &Dataset,
    seed: u64,
) -> Result<Vec<f64>> {
    let params = model.params_for(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(data
        .y()
        .iter()
        .zip(&params)
        .map(|(&y, p)| {
            let lo = cdf(y as i64 - 1, p);
            let hi = cdf(y as i64, p);
            // 1 - U lies in (0, 1], so u lies in (lo, hi].
            let v: f64 = 1.0 - rng.random::<f64>();
            let u = lo + (hi - lo) * v;
            normal_quantile(u.clamp(1e-16, 1.0 - 1e-16))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub ks_statistic: f64,
    pub p_value: f64,
    /// `(theoretical, sample)` quantile pairs for a normal Q-Q plot.
    pub qq: Vec<(f64, f64)>,
}

/// Kolmogorov-Smirnov test of the residuals against the standard normal.
pub fn residual_normality(residuals: &[f64]) -> Result<NormalityReport> {
    const MIN_N: usize = 8;
    if residuals.len() < MIN_N {
        return Err(Error::TooFewObservations {
            needed: MIN_N,
            got: residuals.len(),
        });
    }
    let (ks_statistic, p_value) = ks_test(residuals, normal_cdf);
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let qq = sorted
        .iter()
        .enumerate()
        .map(|(i, &r)| (normal_quantile((i as f64 + 0.5) / n), r))
        .collect();
    Ok(NormalityReport {
        ks_statistic,
        p_value,
        qq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_normal_grid_is_accepted() {
        let n = 200;
        let r: Vec<f64> = (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect();
        let rep = residual_normality(&r).unwrap();
        assert!(rep.p_value > 0.99, "{}", rep.p_value);
        assert!(rep.qq.iter().all(|(t, s)| (t - s).abs() < 1e-12));

        let shifted: Vec<f64> = r.iter().map(|v| v + 2.0).collect();
        assert!(residual_normality(&shifted).unwrap().p_value < 1e-10);
    }

    #[test]
    fn needs_eight_residuals() {
        assert!(residual_normality(&[0.0; 7]).is_err());
        assert!(residual_normality(&[0.0; 8]).is_ok());
    }
}
