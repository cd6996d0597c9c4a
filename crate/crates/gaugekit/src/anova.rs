//! Balanced gauge-study data and its one-way analysis-of-variance
//! decomposition.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Measurements from a balanced standard plan: `a` units, each measured
/// `r` times. Values are stored row-major, `values[i * r + j]` being the
/// j-th replicate on unit i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedData {
    a: usize,
    r: usize,
    values: Vec<f64>,
}

impl BalancedData {
    /// Build from a row-major value buffer. Requires `a >= 2`, `r >= 2`,
    /// every cell finite.
    pub fn new(a: usize, r: usize, values: Vec<f64>) -> Result<Self> {
        if a < 2 || r < 2 {
            return Err(Error::Data(format!(
                "design must have at least 2 units and 2 replicates, got a={a}, r={r}"
            )));
        }
        if values.len() != a * r {
            return Err(Error::Data(format!(
                "expected {} values for a={a}, r={r}, got {}",
                a * r,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite measurement at unit {}, replicate {}",
                pos / r,
                pos % r
            )));
        }
        Ok(BalancedData { a, r, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = rows.len();
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::Data("ragged rows in balanced data".into()));
        }
        Self::new(a, r, rows.concat())
    }

    pub fn units(&self) -> usize {
        self.a
    }

    pub fn replicates(&self) -> usize {
        self.r
    }

    pub fn n_total(&self) -> usize {
        self.a * self.r
    }

    pub fn value(&self, unit: usize, replicate: usize) -> f64 {
        self.values[unit * self.r + replicate]
    }

    pub fn unit_row(&self, unit: usize) -> &[f64] {
        &self.values[unit * self.r..(unit + 1) * self.r]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Sums of squares, mean squares, and degrees of freedom of the one-way
/// decomposition, plus the means they were built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnovaTable {
    pub ss_u: f64,
    pub ss_eps: f64,
    pub ss_t: f64,
    pub ms_u: f64,
    pub ms_eps: f64,
    pub df_u: usize,
    pub df_eps: usize,
    pub grand_mean: f64,
    pub unit_means: Vec<f64>,
}

/// Decompose a balanced study into between-unit and within-unit sums of
/// squares.
///
/// Two-pass computation: means first, then squared deviations. The naive
/// Σx² − N·x̄² form cancels catastrophically when the grand mean is large
/// relative to the spread.
pub fn anova_table(data: &BalancedData) -> Result<AnovaTable> {
    let (a, r) = (data.units(), data.replicates());
    let rf = r as f64;

    let unit_means: Vec<f64> = (0..a)
        .map(|i| data.unit_row(i).iter().sum::<f64>() / rf)
        .collect();
    let grand_mean = unit_means.iter().sum::<f64>() / a as f64;

    let mut ss_u = 0.0;
    let mut ss_eps = 0.0;
    let mut ss_t = 0.0;
    for i in 0..a {
        let mi = unit_means[i];
        let d = mi - grand_mean;
        ss_u += d * d;
        for &y in data.unit_row(i) {
            let e = y - mi;
            ss_eps += e * e;
            let t = y - grand_mean;
            ss_t += t * t;
        }
    }
    ss_u *= rf;

    let df_u = a - 1;
    let df_eps = a * (r - 1);
    Ok(AnovaTable {
        ss_u,
        ss_eps,
        ss_t,
        ms_u: ss_u / df_u as f64,
        ms_eps: ss_eps / df_eps as f64,
        df_u,
        df_eps,
        grand_mean,
        unit_means,
    })
}

/// Allocation-free sums for the simulation hot path:
/// (ss_u, ss_eps, ss_t, grand_mean).
pub(crate) fn anova_sums(data: &BalancedData) -> (f64, f64, f64, f64) {
    let (a, r) = (data.units(), data.replicates());
    let rf = r as f64;
    let mut grand = 0.0;
    for &v in data.values() {
        grand += v;
    }
    grand /= (a * r) as f64;

    let mut ss_u = 0.0;
    let mut ss_eps = 0.0;
    let mut ss_t = 0.0;
    for i in 0..a {
        let row = data.unit_row(i);
        let mut mi = 0.0;
        for &v in row {
            mi += v;
        }
        mi /= rf;
        let d = mi - grand;
        ss_u += d * d;
        for &v in row {
            let e = v - mi;
            ss_eps += e * e;
            let t = v - grand;
            ss_t += t * t;
        }
    }
    (ss_u * rf, ss_eps, ss_t, grand)
}

/// The observed variance-ratio statistic MSu / MSε.
pub fn f_statistic(table: &AnovaTable) -> Result<f64> {
    if table.ms_eps <= 0.0 {
        return Err(Error::Degenerate(
            "all replicates identical within every unit: zero repeatability variance".into(),
        ));
    }
    Ok(table.ms_u / table.ms_eps)
}

/// Empirical covariance diagnostics for the one-way model assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceCheck {
    /// Average product of same-unit replicate deviations; estimates the
    /// unit variance component.
    pub within_unit_cov: f64,
    pub within_unit_se: f64,
    /// Average product across disjoint unit pairs; the model predicts zero.
    pub between_unit_cov: f64,
    pub between_unit_se: f64,
}

/// Estimate within-unit and between-unit measurement covariances.
///
/// Within: each unit contributes the mean pairwise product of its replicate
/// deviations from the grand mean, giving `a` independent terms. Between:
/// units are paired off disjointly so the products are independent, which
/// keeps the standard errors honest. Diagnostic only.
pub fn covariance_check(data: &BalancedData) -> Result<CovarianceCheck> {
    let (a, r) = (data.units(), data.replicates());
    if a < 3 {
        return Err(Error::Data(format!(
            "covariance diagnostic needs at least 3 units, got {a}"
        )));
    }
    let table = anova_table(data)?;
    let gm = table.grand_mean;

    let mut within = Vec::with_capacity(a);
    for i in 0..a {
        let row = data.unit_row(i);
        let mut sum = 0.0;
        let mut count = 0.0;
        for j in 0..r {
            for jp in (j + 1)..r {
                sum += (row[j] - gm) * (row[jp] - gm);
                count += 1.0;
            }
        }
        within.push(sum / count);
    }
    let (w_mean, w_se) = mean_and_se(&within);

    let between: Vec<f64> = (0..a / 2)
        .map(|k| (table.unit_means[2 * k] - gm) * (table.unit_means[2 * k + 1] - gm))
        .collect();
    let (b_mean, b_se) = mean_and_se(&between);

    Ok(CovarianceCheck {
        within_unit_cov: w_mean,
        within_unit_se: w_se,
        between_unit_cov: b_mean,
        between_unit_se: b_se,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
