//! Truncated-power spline bases and design matrices.
//!
//! A covariate `x` with degree `D` and knots `g_1 < ... < g_K` contributes
//! the columns
//!
//! ```text
//! x, x^2, ..., x^D, (x - g_1)^D I(x > g_1), ..., (x - g_K)^D I(x > g_K)
//! ```
//!
//! and every design carries a single shared intercept column in front.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};

/// Basis configuration for one covariate in one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub covariate: String,
    pub kind: ColumnKind,
    pub degree: u32,
    pub num_knots: u32,
    /// Explicit knot locations. When absent they are placed at empirical
    /// quantiles of the covariate during fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
}

impl CovariateSpec {
    pub fn linear(covariate: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            covariate: covariate.into(),
            kind,
            degree: 1,
            num_knots: 0,
            knots: None,
        }
    }

    pub fn spline(covariate: impl Into<String>, degree: u32, num_knots: u32) -> Self {
        Self {
            covariate: covariate.into(),
            kind: ColumnKind::Continuous,
            degree,
            num_knots,
            knots: None,
        }
    }

    pub fn with_knots(mut self, knots: Vec<f64>) -> Self {
        self.num_knots = knots.len() as u32;
        self.knots = Some(knots);
        self
    }

    /// Number of design columns this covariate contributes.
    pub fn width(&self) -> usize {
        (self.degree + self.num_knots) as usize
    }

    /// Checks the structural invariants, and the knot range when `x` is given.
    pub fn validate(&self, x: Option<&[f64]>) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.covariate)));
        if self.kind == ColumnKind::Dummy && (self.degree > 1 || self.num_knots > 0) {
            return fail("dummy covariates allow degree <= 1 and no knots".into());
        }
        if self.num_knots > 0 && self.degree == 0 {
            return fail("knots require degree >= 1".into());
        }
        if let Some(knots) = &self.knots {
            if knots.len() != self.num_knots as usize {
                return fail(format!(
                    "{} knots given but num_knots = {}",
                    knots.len(),
                    self.num_knots
                ));
            }
            if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
                return fail("knots must be finite and strictly increasing".into());
            }
            if let (Some(x), Some(first), Some(last)) = (x, knots.first(), knots.last()) {
                let (lo, hi) = range(x);
                if *first <= lo || *last >= hi {
                    return fail(format!(
                        "knots must lie strictly inside the observed range ({lo}, {hi})"
                    ));
                }
            }
        }
        Ok(())
    }
}

fn range(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Interpolated empirical quantile of sorted data (the usual "type 7" rule).
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Places `k` knots at the `j/(k+1)` empirical quantiles of `x`.
///
/// Knots that collide with each other or with the range boundary (ties in
/// `x`) are moved to the midpoint towards the next distinct value.
pub fn place_knots(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k + 2 {
        return Err(Error::TooFewDistinct {
            knots: k,
            needed: k + 2,
            found: distinct.len(),
        });
    }
    let hi = distinct[distinct.len() - 1];
    let mut knots = Vec::with_capacity(k);
    let mut floor = distinct[0];
    for j in 1..=k {
        let mut g = sorted_quantile(&sorted, j as f64 / (k + 1) as f64);
        if g <= floor {
            let next = distinct
                .iter()
                .copied()
                .find(|&v| v > floor)
                .unwrap_or(hi);
            g = 0.5 * (floor + next);
        }
        knots.push(g);
        floor = g;
    }
    let ok = knots.windows(2).all(|w| w[0] < w[1]) && knots[k - 1] < hi;
    if ok {
        Ok(knots)
    } else {
        // Heavy ties at the top: fall back to midpoints between distinct values.
        let m = distinct.len();
        Ok((1..=k)
            .map(|j| {
                let i = (j * (m - 1) / (k + 1)).clamp(0, m - 2);
                0.5 * (distinct[i] + distinct[i + 1])
            })
            .collect())
    }
}

fn knot_positions(x: &[f64], spec: &CovariateSpec) -> Result<Vec<f64>> {
    match &spec.knots {
        Some(k) => Ok(k.clone()),
        None => place_knots(x, spec.num_knots as usize),
    }
}

/// Basis block for one covariate: `degree` power columns then one hinge
/// column per knot. Knots must already be resolved.
pub fn basis_columns(x: &[f64], spec: &CovariateSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate(None)?;
    let knots: &[f64] = match (&spec.knots, spec.num_knots) {
        (Some(k), _) => k,
        (None, 0) => &[],
        (None, _) => {
            return Err(Error::InvalidSpec(format!(
                "{}: knots not resolved",
                spec.covariate
            )))
        }
    };
    let degree = spec.degree as i32;
    let mut cols = Vec::with_capacity(spec.width());
    for d in 1..=degree {
        cols.push(x.iter().map(|&v| v.powi(d)).collect());
    }
    for &g in knots {
        cols.push(
            x.iter()
                .map(|&v| if v > g { (v - g).powi(degree) } else { 0.0 })
                .collect(),
        );
    }
    Ok(cols)
}

/// Identifies one design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColumnLabel {
    Intercept,
    Power { covariate: String, power: u32 },
    Knot { covariate: String, index: u32, at: f64 },
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnLabel::Intercept => write!(f, "(Intercept)"),
            ColumnLabel::Power { covariate, power: 1 } => write!(f, "{covariate}"),
            ColumnLabel::Power { covariate, power } => write!(f, "{covariate}^{power}"),
            ColumnLabel::Knot {
                covariate,
                index,
                at,
            } => write!(f, "{covariate}:knot{index}@{at:.4}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: DMatrix<f64>,
    pub labels: Vec<ColumnLabel>,
    pub intercept_included: bool,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }
}

/// The two designs of a model: one for the `q` link, one for the `beta` link.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    pub q: DesignMatrix,
    pub beta: DesignMatrix,
}

/// Per-covariate min-max scaling applied before basis expansion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl ScalingRecord {
    /// Records the observed range of every continuous covariate named in `specs`.
    pub fn from_data<'a>(
        data: &Dataset,
        specs: impl IntoIterator<Item = &'a CovariateSpec>,
    ) -> Result<Self> {
        let mut ranges = BTreeMap::new();
        for spec in specs {
            if spec.kind == ColumnKind::Continuous {
                let (lo, hi) = range(&data.column(&spec.covariate)?.values);
                if hi > lo {
                    ranges.insert(spec.covariate.clone(), (lo, hi));
                }
            }
        }
        Ok(Self { ranges })
    }

    pub fn apply(&self, covariate: &str, x: f64) -> f64 {
        match self.ranges.get(covariate) {
            Some(&(lo, hi)) => (x - lo) / (hi - lo),
            None => x,
        }
    }
}

fn scaled_values(data: &Dataset, name: &str, scaling: Option<&ScalingRecord>) -> Result<Vec<f64>> {
    let col = data.column(name)?;
    Ok(match scaling {
        Some(s) => col.values.iter().map(|&v| s.apply(name, v)).collect(),
        None => col.values.clone(),
    })
}

/// Fills in knot locations (placing them when absent) and checks every spec
/// against the data it refers to.
pub fn resolve_specs(
    data: &Dataset,
    specs: &[CovariateSpec],
    scaling: Option<&ScalingRecord>,
) -> Result<Vec<CovariateSpec>> {
    specs
        .iter()
        .map(|spec| {
            let x = scaled_values(data, &spec.covariate, scaling)?;
            let mut resolved = spec.clone();
            resolved.kind = data.column(&spec.covariate)?.kind;
            if spec.kind == ColumnKind::Dummy {
                resolved.kind = ColumnKind::Dummy;
            }
            if resolved.num_knots > 0 && resolved.knots.is_none() {
                resolved.knots = Some(knot_positions(&x, spec)?);
            }
            resolved.validate(Some(&x))?;
            Ok(resolved)
        })
        .collect()
}

/// Builds the design for one link: intercept followed by each covariate
/// block in order. Specs must be resolved (see [`resolve_specs`]) unless
/// they have no knots.
pub fn build_design(
    data: &Dataset,
    specs: &[CovariateSpec],
    scaling: Option<&ScalingRecord>,
) -> Result<DesignMatrix> {
    let n = data.len();
    let width = 1 + specs.iter().map(CovariateSpec::width).sum::<usize>();
    let mut columns = DMatrix::zeros(n, width);
    let mut labels = Vec::with_capacity(width);
    columns.column_mut(0).fill(1.0);
    labels.push(ColumnLabel::Intercept);
    let mut j = 1;
    for spec in specs {
        let x = scaled_values(data, &spec.covariate, scaling)?;
        for (c, values) in basis_columns(&x, spec)?.into_iter().enumerate() {
            columns.column_mut(j).copy_from_slice(&values);
            labels.push(if c < spec.degree as usize {
                ColumnLabel::Power {
                    covariate: spec.covariate.clone(),
                    power: c as u32 + 1,
                }
            } else {
                let index = c - spec.degree as usize;
                ColumnLabel::Knot {
                    covariate: spec.covariate.clone(),
                    index: index as u32 + 1,
                    at: spec.knots.as_ref().expect("resolved")[index],
                }
            });
            j += 1;
        }
    }
    Ok(DesignMatrix {
        columns,
        labels,
        intercept_included: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    #[test]
    fn uniform_grid_knots_are_quartiles() {
        let x: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let knots = place_knots(&x, 3).unwrap();
        for (k, want) in knots.iter().zip([0.25, 0.5, 0.75]) {
            assert!((k - want).abs() < 1e-12, "{knots:?}");
        }
    }

    #[test]
    fn constant_covariate_cannot_host_knots() {
        assert!(matches!(
            place_knots(&[2.0; 10], 1),
            Err(Error::TooFewDistinct { .. })
        ));
    }

    #[test]
    fn tied_data_gets_strictly_increasing_interior_knots() {
        let mut x = vec![0.0; 80];
        x.extend([1.0, 2.0, 3.0, 4.0]);
        let knots = place_knots(&x, 3).unwrap();
        assert!(knots.windows(2).all(|w| w[0] < w[1]), "{knots:?}");
        assert!(knots[0] > 0.0 && knots[2] < 4.0, "{knots:?}");
    }

    #[test]
    fn hinge_is_zero_at_its_knot() {
        let spec = CovariateSpec::spline("x", 3, 1).with_knots(vec![0.5]);
        let cols = basis_columns(&[0.5, 0.75], &spec).unwrap();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[3][0], 0.0);
        assert!((cols[3][1] - 0.25f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn linear_block_is_identity() {
        let x = [0.1, 0.2, 0.9];
        let cols = basis_columns(&x, &CovariateSpec::linear("x", ColumnKind::Continuous)).unwrap();
        assert_eq!(cols, vec![x.to_vec()]);
    }

    #[test]
    fn spec_validation() {
        let mut dummy = CovariateSpec::linear("d", ColumnKind::Dummy);
        assert!(dummy.validate(None).is_ok());
        dummy.degree = 2;
        assert!(dummy.validate(None).is_err());
        let mut s = CovariateSpec::spline("x", 0, 1);
        assert!(s.validate(None).is_err());
        s.degree = 1;
        s.knots = Some(vec![0.0]);
        assert!(s.validate(Some(&[0.0, 1.0])).is_err());
        s.knots = Some(vec![0.5]);
        assert!(s.validate(Some(&[0.0, 1.0])).is_ok());
        let unsorted = CovariateSpec::spline("x", 1, 2).with_knots(vec![0.6, 0.4]);
        assert!(unsorted.validate(None).is_err());
    }

    #[test]
    fn design_counts_and_labels() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let d: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let d2: Vec<f64> = (0..50).map(|i| ((i / 3) % 2) as f64).collect();
        let data = Dataset::new(
            vec![0; 50],
            vec![
                Column::continuous("x", x),
                Column::dummy("d", d),
                Column::dummy("e", d2),
            ],
        )
        .unwrap();
        let two_dummies = [
            CovariateSpec::linear("d", ColumnKind::Dummy),
            CovariateSpec::linear("e", ColumnKind::Dummy),
        ];
        assert_eq!(build_design(&data, &two_dummies, None).unwrap().ncols(), 3);

        let specs = resolve_specs(
            &data,
            &[
                CovariateSpec::spline("x", 2, 3),
                CovariateSpec::linear("d", ColumnKind::Dummy),
            ],
            None,
        )
        .unwrap();
        let design = build_design(&data, &specs, None).unwrap();
        assert_eq!(design.ncols(), 7);
        assert_eq!(design.labels[0], ColumnLabel::Intercept);
        assert_eq!(design.labels[2].to_string(), "x^2");
        assert!(matches!(design.labels[3], ColumnLabel::Knot { index: 1, .. }));

        assert!(matches!(
            build_design(&data, &[CovariateSpec::linear("nope", ColumnKind::Continuous)], None),
            Err(Error::MissingColumn(_))
        ));
    }
}
