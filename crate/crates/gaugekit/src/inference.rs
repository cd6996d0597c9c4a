//! Hypothesis tests and confidence intervals for the one-way gauge study.
//!
//! The error variance, PTR, ρ, and every ratio derived from ρ admit exact
//! pivot-based intervals. The unit variance component does not: three
//! large-sample constructions are provided (Wald, log-transformed Wald, and
//! a chi-square interval from the fixed-a limit law).

use crate::anova::AnovaTable;
use crate::dist::{chi2_quantile, chi2_sf, f_quantile, f_sf, normal_quantile};
use crate::error::{Error, Result};
use crate::estimators::{SpecLimits, VarianceEstimates};
use crate::theory::sigma22_plugin;
use serde::{Deserialize, Serialize};

/// Default smallest σ̂²u for which the log-transformed interval is offered.
pub const DEFAULT_LOG_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// H0: σ²u = 0 against σ²u > 0.
    UnitVarianceZero,
    /// H0: σε ≤ σ0 against σε > σ0.
    ErrorVarianceAtMost,
    /// H0: ρ ≤ ρ0 against ρ > ρ0.
    RhoAtMost,
}

/// Null reference distribution of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NullDistribution {
    F { df1: f64, df2: f64 },
    ChiSquare { df: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TestResult {
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    pub null_distribution: NullDistribution,
    pub p_value: f64,
    /// σ0 or ρ0 where the hypothesis carries a threshold.
    pub threshold: Option<f64>,
}

fn require_positive_ms_eps(table: &AnovaTable) -> Result<()> {
    if table.ms_eps <= 0.0 {
        return Err(Error::Degenerate(
            "zero repeatability variance: the variance-ratio tests are undefined".into(),
        ));
    }
    Ok(())
}

/// Test H0: σ²u = 0 with the statistic MSu/MSε against F(a−1, a(r−1)).
pub fn test_unit_variance(table: &AnovaTable, a: usize, r: usize) -> Result<TestResult> {
    require_positive_ms_eps(table)?;
    let (df1, df2) = ((a - 1) as f64, (a * (r - 1)) as f64);
    let statistic = table.ms_u / table.ms_eps;
    Ok(TestResult {
        hypothesis: Hypothesis::UnitVarianceZero,
        statistic,
        null_distribution: NullDistribution::F { df1, df2 },
        p_value: f_sf(statistic, df1, df2)?,
        threshold: None,
    })
}

/// Test H0: σε ≤ σ0 with the statistic SSε/σ0² against χ²(a(r−1)).
/// `sigma0` is the threshold standard deviation.
pub fn test_error_variance(table: &AnovaTable, a: usize, r: usize, sigma0: f64) -> Result<TestResult> {
    if !(sigma0 > 0.0) {
        return Err(Error::Domain(format!(
            "sigma0 must be positive, got {sigma0}"
        )));
    }
    let df = (a * (r - 1)) as f64;
    let statistic = table.ss_eps / (sigma0 * sigma0);
    Ok(TestResult {
        hypothesis: Hypothesis::ErrorVarianceAtMost,
        statistic,
        null_distribution: NullDistribution::ChiSquare { df },
        p_value: chi2_sf(statistic, df)?,
        threshold: Some(sigma0),
    })
}

/// Test H0: ρ ≤ ρ0 with the statistic (1 + r·ρ0)⁻¹ MSu/MSε against
/// F(a−1, a(r−1)). At ρ0 = 0 this is exactly the unit-variance test.
pub fn test_rho(table: &AnovaTable, a: usize, r: usize, rho0: f64) -> Result<TestResult> {
    require_positive_ms_eps(table)?;
    if !(rho0 >= 0.0) {
        return Err(Error::Domain(format!("rho0 must be non-negative, got {rho0}")));
    }
    let (df1, df2) = ((a - 1) as f64, (a * (r - 1)) as f64);
    let statistic = table.ms_u / table.ms_eps / (1.0 + r as f64 * rho0);
    Ok(TestResult {
        hypothesis: Hypothesis::RhoAtMost,
        statistic,
        null_distribution: NullDistribution::F { df1, df2 },
        p_value: f_sf(statistic, df1, df2)?,
        threshold: Some(rho0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiKind {
    Sigma2EpsExact,
    PtrExact,
    RhoExact,
    RrExact,
    SnrExact,
    IccExact,
    Sigma2UWald,
    Sigma2ULog,
    Sigma2UChi,
}

impl CiKind {
    pub fn name(self) -> &'static str {
        match self {
            CiKind::Sigma2EpsExact => "sigma2_eps_exact",
            CiKind::PtrExact => "ptr_exact",
            CiKind::RhoExact => "rho_exact",
            CiKind::RrExact => "rr_exact",
            CiKind::SnrExact => "snr_exact",
            CiKind::IccExact => "icc_exact",
            CiKind::Sigma2UWald => "sigma2_u_wald",
            CiKind::Sigma2ULog => "sigma2_u_log",
            CiKind::Sigma2UChi => "sigma2_u_chi",
        }
    }
}

impl std::str::FromStr for CiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigma2_eps_exact" | "eps" | "sigma2_eps" => Ok(CiKind::Sigma2EpsExact),
            "ptr_exact" | "ptr" => Ok(CiKind::PtrExact),
            "rho_exact" | "rho" => Ok(CiKind::RhoExact),
            "rr_exact" | "rr" => Ok(CiKind::RrExact),
            "snr_exact" | "snr" => Ok(CiKind::SnrExact),
            "icc_exact" | "icc" => Ok(CiKind::IccExact),
            "sigma2_u_wald" | "wald" => Ok(CiKind::Sigma2UWald),
            "sigma2_u_log" | "log" => Ok(CiKind::Sigma2ULog),
            "sigma2_u_chi" | "chi" => Ok(CiKind::Sigma2UChi),
            other => Err(Error::Spec(format!("unknown interval kind '{other}'"))),
        }
    }
}

/// A two-sided confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    /// Confidence level 1 − α.
    pub level: f64,
    pub kind: CiKind,
    /// Set when a raw negative bound was clipped to the parameter space.
    pub truncated_at_zero: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Clip negative bounds to zero, flagging the truncation.
    pub fn truncated_at_zero(mut self) -> Self {
        if self.lower < 0.0 || self.upper < 0.0 {
            self.lower = self.lower.max(0.0);
            self.upper = self.upper.max(0.0);
            self.truncated_at_zero = true;
        }
        self
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Exact interval for σ²ε: [SSε/χ²_{dfε,1−α/2}, SSε/χ²_{dfε,α/2}].
pub fn ci_sigma2_eps(table: &AnovaTable, a: usize, r: usize, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let df = (a * (r - 1)) as f64;
    let upper_crit = chi2_quantile(1.0 - alpha / 2.0, df)?;
    let lower_crit = chi2_quantile(alpha / 2.0, df)?;
    Ok(ConfidenceInterval {
        lower: table.ss_eps / upper_crit,
        upper: table.ss_eps / lower_crit,
        level: 1.0 - alpha,
        kind: CiKind::Sigma2EpsExact,
        truncated_at_zero: false,
    })
}

/// Exact interval for PTR: the σ²ε interval mapped through
/// κ·√(·)/(UL − LL), which is monotone and order-preserving.
pub fn ci_ptr(
    table: &AnovaTable,
    a: usize,
    r: usize,
    alpha: f64,
    spec: SpecLimits,
) -> Result<ConfidenceInterval> {
    let eps = ci_sigma2_eps(table, a, r, alpha)?;
    let scale = spec.kappa / (spec.upper - spec.lower);
    Ok(ConfidenceInterval {
        lower: scale * eps.lower.sqrt(),
        upper: scale * eps.upper.sqrt(),
        level: eps.level,
        kind: CiKind::PtrExact,
        truncated_at_zero: false,
    })
}

/// Exact interval for ρ from the F pivot; bounds are raw and the lower one
/// may be negative. Use [`ConfidenceInterval::truncated_at_zero`] for the
/// parameter-space version.
pub fn ci_rho(table: &AnovaTable, a: usize, r: usize, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    require_positive_ms_eps(table)?;
    let (df1, df2) = ((a - 1) as f64, (a * (r - 1)) as f64);
    let ratio = table.ms_u / table.ms_eps;
    let rf = r as f64;
    let f_hi = f_quantile(1.0 - alpha / 2.0, df1, df2)?;
    let f_lo = f_quantile(alpha / 2.0, df1, df2)?;
    Ok(ConfidenceInterval {
        lower: (ratio / f_hi - 1.0) / rf,
        upper: (ratio / f_lo - 1.0) / rf,
        level: 1.0 - alpha,
        kind: CiKind::RhoExact,
        truncated_at_zero: false,
    })
}

/// Derived parameter targeted by [`ci_derived`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivedTarget {
    /// %R&R = 100·(1 + ρ)^(−1/2); a decreasing map, so bounds swap.
    RrPct,
    /// SNR = √ρ.
    Snr,
    /// ICC = 1/(1 + 1/ρ).
    Icc,
}

/// Map an exact ρ interval onto %R&R, SNR, or ICC.
///
/// The square-root and ICC maps need non-negative ρ, so those bounds are
/// clipped at zero first (flagged). The %R&R map keeps raw bounds, mirroring
/// the exact construction, and reverses their order.
pub fn ci_derived(rho_ci: &ConfidenceInterval, target: DerivedTarget) -> Result<ConfidenceInterval> {
    if rho_ci.kind != CiKind::RhoExact {
        return Err(Error::Domain(
            "derived intervals transform an exact rho interval".into(),
        ));
    }
    let (ci, kind) = match target {
        DerivedTarget::RrPct => {
            let map = |rho: f64| 100.0 / (1.0 + rho).sqrt();
            (
                ConfidenceInterval {
                    lower: map(rho_ci.upper),
                    upper: map(rho_ci.lower),
                    level: rho_ci.level,
                    kind: CiKind::RrExact,
                    truncated_at_zero: false,
                },
                CiKind::RrExact,
            )
        }
        DerivedTarget::Snr => {
            let clipped = rho_ci.truncated_at_zero();
            (
                ConfidenceInterval {
                    lower: clipped.lower.sqrt(),
                    upper: clipped.upper.sqrt(),
                    level: rho_ci.level,
                    kind: CiKind::SnrExact,
                    truncated_at_zero: clipped.truncated_at_zero,
                },
                CiKind::SnrExact,
            )
        }
        DerivedTarget::Icc => {
            let clipped = rho_ci.truncated_at_zero();
            let map = |rho: f64| if rho == 0.0 { 0.0 } else { 1.0 / (1.0 + 1.0 / rho) };
            (
                ConfidenceInterval {
                    lower: map(clipped.lower),
                    upper: map(clipped.upper),
                    level: rho_ci.level,
                    kind: CiKind::IccExact,
                    truncated_at_zero: clipped.truncated_at_zero,
                },
                CiKind::IccExact,
            )
        }
    };
    debug_assert_eq!(ci.kind, kind);
    debug_assert!(ci.lower <= ci.upper || ci.lower.is_nan());
    Ok(ci)
}

/// Approximate interval family for σ²u.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sigma2UKind {
    Wald,
    Log,
    Chi,
}

/// Wald bounds (raw lower before clipping comes second in the pair's
/// construction; the returned lower is already clipped at zero).
pub(crate) fn wald_bounds(s2u: f64, s22: f64, a: f64, z: f64) -> (f64, f64) {
    let half = z * (s22 / a).sqrt();
    ((s2u - half).max(0.0), s2u + half)
}

/// Log-transformed Wald bounds; caller guarantees s2u > 0.
pub(crate) fn log_bounds(s2u: f64, s22: f64, a: f64, z: f64) -> (f64, f64) {
    let spread = z * s22.sqrt() / (s2u * a.sqrt());
    (s2u * (-spread).exp(), s2u * spread.exp())
}

/// Chi-square interval bounds from precomputed χ²(a−1) critical values.
pub(crate) fn chi_bounds(s2u: f64, a: f64, chi_lo: f64, chi_hi: f64) -> (f64, f64) {
    (a * s2u / chi_hi, a * s2u / chi_lo)
}

/// Approximate interval for σ²u built on the method's own estimates.
///
/// * `wald`: σ̂²u ± z·√(σ̂₂₂/a), lower bound clipped at zero.
/// * `log`: Wald on log σ̂²u, range-preserving; requires σ̂²u > `log_eps`
///   (default 0.01) because the width explodes as the estimate nears zero.
/// * `chi`: [a·σ̂²u/χ²_{a−1,1−α/2}, a·σ̂²u/χ²_{a−1,α/2}] from the fixed-a
///   large-r limit; requires σ̂²u > 0.
pub fn ci_sigma2_u(
    estimates: &VarianceEstimates,
    a: usize,
    r: usize,
    alpha: f64,
    kind: Sigma2UKind,
    log_eps: Option<f64>,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let s2u = estimates.sigma2_u;
    let s22 = sigma22_plugin(s2u.max(0.0), estimates.sigma2_eps, r);
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let level = 1.0 - alpha;
    match kind {
        Sigma2UKind::Wald => {
            let (lower, upper) = wald_bounds(s2u, s22, a as f64, z);
            Ok(ConfidenceInterval {
                lower,
                upper,
                level,
                kind: CiKind::Sigma2UWald,
                truncated_at_zero: lower == 0.0 && s2u - (upper - s2u) < 0.0,
            })
        }
        Sigma2UKind::Log => {
            let eps = log_eps.unwrap_or(DEFAULT_LOG_EPS);
            if s2u <= 0.0 {
                return Err(Error::Degenerate(
                    "log interval undefined at the boundary estimate".into(),
                ));
            }
            if s2u <= eps {
                return Err(Error::NotApplicable(format!(
                    "log interval is unreliable for estimates at or below {eps}"
                )));
            }
            let (lower, upper) = log_bounds(s2u, s22, a as f64, z);
            Ok(ConfidenceInterval {
                lower,
                upper,
                level,
                kind: CiKind::Sigma2ULog,
                truncated_at_zero: false,
            })
        }
        Sigma2UKind::Chi => {
            if s2u <= 0.0 {
                return Err(Error::Degenerate(
                    "chi-square interval undefined at the boundary estimate".into(),
                ));
            }
            let df = (a - 1) as f64;
            let hi = chi2_quantile(1.0 - alpha / 2.0, df)?;
            let lo = chi2_quantile(alpha / 2.0, df)?;
            let (lower, upper) = chi_bounds(s2u, a as f64, lo, hi);
            Ok(ConfidenceInterval {
                lower,
                upper,
                level,
                kind: CiKind::Sigma2UChi,
                truncated_at_zero: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anova::{anova_table, BalancedData};
    use crate::estimators::{estimate_mle, Method};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn hand_table() -> AnovaTable {
        let d =
            BalancedData::from_rows(&[vec![1.0, 3.0], vec![5.0, 7.0], vec![3.0, 5.0]]).unwrap();
        anova_table(&d).unwrap()
    }

    #[test]
    fn unit_variance_test_on_hand_dataset() {
        let t = test_unit_variance(&hand_table(), 3, 2).unwrap();
        assert_abs_diff_eq!(t.statistic, 4.0, epsilon = 1e-12);
        let want = 1.0 - crate::dist::f_cdf(4.0, 2.0, 3.0).unwrap();
        assert_abs_diff_eq!(t.p_value, want, epsilon = 1e-12);
        assert_eq!(
            t.null_distribution,
            NullDistribution::F { df1: 2.0, df2: 3.0 }
        );
    }

    #[test]
    fn unit_variance_test_with_no_unit_signal() {
        let d =
            BalancedData::from_rows(&[vec![1.0, 3.0], vec![0.0, 4.0], vec![3.0, 1.0]]).unwrap();
        let table = anova_table(&d).unwrap();
        let t = test_unit_variance(&table, 3, 2).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn error_variance_test_properties() {
        let table = hand_table();
        // ss_eps → 0 gives p → 1: use sigma0 huge.
        let t = test_error_variance(&table, 3, 2, 1e6).unwrap();
        assert!(t.p_value > 1.0 - 1e-9);
        // statistic = df at sigma0² = ss_eps/df: p around the bulk.
        let sigma0 = (table.ss_eps / 3.0).sqrt();
        let t = test_error_variance(&table, 3, 2, sigma0).unwrap();
        assert_abs_diff_eq!(t.statistic, 3.0, epsilon = 1e-12);
        let want = chi2_sf(3.0, 3.0).unwrap();
        assert_abs_diff_eq!(t.p_value, want, epsilon = 1e-12);
        assert!(test_error_variance(&table, 3, 2, 0.0).is_err());
    }

    #[test]
    fn rho_test_reduces_to_unit_variance_at_zero() {
        let table = hand_table();
        let t0 = test_rho(&table, 3, 2, 0.0).unwrap();
        let tu = test_unit_variance(&table, 3, 2).unwrap();
        assert_eq!(t0.statistic.to_bits(), tu.statistic.to_bits());
        assert_eq!(t0.p_value.to_bits(), tu.p_value.to_bits());
    }

    #[test]
    fn rho_test_on_hand_dataset() {
        let t = test_rho(&hand_table(), 3, 2, 1.0).unwrap();
        assert_relative_eq!(t.statistic, 4.0 / 3.0, max_relative = 1e-12);
        let want = 1.0 - crate::dist::f_cdf(4.0 / 3.0, 2.0, 3.0).unwrap();
        assert_abs_diff_eq!(t.p_value, want, epsilon = 1e-12);
    }

    #[test]
    fn sigma2_eps_interval_from_quantile_oracle() {
        let table = hand_table();
        let ci = ci_sigma2_eps(&table, 3, 2, 0.1).unwrap();
        let hi = chi2_quantile(0.95, 3.0).unwrap();
        let lo = chi2_quantile(0.05, 3.0).unwrap();
        assert_relative_eq!(ci.lower, 6.0 / hi, max_relative = 1e-10);
        assert_relative_eq!(ci.upper, 6.0 / lo, max_relative = 1e-10);
        assert!(ci.lower < table.ms_eps && table.ms_eps < ci.upper);
    }

    #[test]
    fn ptr_interval_is_monotone_transform_of_eps() {
        let table = hand_table();
        let spec = SpecLimits::new(0.0, 60.0, 6.0).unwrap();
        let eps = ci_sigma2_eps(&table, 3, 2, 0.1).unwrap();
        let ptr = ci_ptr(&table, 3, 2, 0.1, spec).unwrap();
        assert_relative_eq!(ptr.lower, 0.1 * eps.lower.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ptr.upper, 0.1 * eps.upper.sqrt(), max_relative = 1e-12);
        assert!(ptr.lower <= ptr.upper);
    }

    #[test]
    fn rho_interval_from_quantile_oracle() {
        let table = hand_table();
        let ci = ci_rho(&table, 3, 2, 0.1).unwrap();
        let f_hi = f_quantile(0.95, 2.0, 3.0).unwrap();
        let f_lo = f_quantile(0.05, 2.0, 3.0).unwrap();
        assert_relative_eq!(ci.lower, (4.0 / f_hi - 1.0) / 2.0, max_relative = 1e-10);
        assert_relative_eq!(ci.upper, (4.0 / f_lo - 1.0) / 2.0, max_relative = 1e-10);
        assert!(ci.lower <= ci.upper);
    }

    #[test]
    fn derived_intervals_from_rho() {
        let base = ConfidenceInterval {
            lower: 1.0,
            upper: 4.0,
            level: 0.9,
            kind: CiKind::RhoExact,
            truncated_at_zero: false,
        };
        let snr = ci_derived(&base, DerivedTarget::Snr).unwrap();
        assert_abs_diff_eq!(snr.lower, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(snr.upper, 2.0, epsilon = 1e-14);
        let icc = ci_derived(&base, DerivedTarget::Icc).unwrap();
        assert_abs_diff_eq!(icc.lower, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(icc.upper, 0.8, epsilon = 1e-14);
        let rr = ci_derived(&base, DerivedTarget::RrPct).unwrap();
        assert_abs_diff_eq!(rr.lower, 100.0 / 5.0f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(rr.upper, 100.0 / 2.0f64.sqrt(), epsilon = 1e-10);
        assert!(rr.lower <= rr.upper);
    }

    #[test]
    fn derived_intervals_clip_negative_rho() {
        let base = ConfidenceInterval {
            lower: -0.4,
            upper: 2.25,
            level: 0.9,
            kind: CiKind::RhoExact,
            truncated_at_zero: false,
        };
        let snr = ci_derived(&base, DerivedTarget::Snr).unwrap();
        assert_eq!(snr.lower, 0.0);
        assert_abs_diff_eq!(snr.upper, 1.5, epsilon = 1e-14);
        assert!(snr.truncated_at_zero);
        let icc = ci_derived(&base, DerivedTarget::Icc).unwrap();
        assert_eq!(icc.lower, 0.0);
        // %R&R keeps the raw bound; it may exceed 100 for negative rho.
        let rr = ci_derived(&base, DerivedTarget::RrPct).unwrap();
        assert!(rr.upper > 100.0);
        assert!(rr.lower <= rr.upper);
    }

    #[test]
    fn wald_interval_clips_at_zero() {
        let est = VarianceEstimates {
            sigma2_u: 0.001,
            sigma2_eps: 1.0,
            method: Method::Mle,
            at_boundary: false,
        };
        let ci = ci_sigma2_u(&est, 6, 16, 0.1, Sigma2UKind::Wald, None).unwrap();
        assert_eq!(ci.lower, 0.0);
        assert!(ci.truncated_at_zero);
        assert!(ci.upper > 0.0);
    }

    #[test]
    fn log_interval_threshold_behaviour() {
        let mut est = VarianceEstimates {
            sigma2_u: 0.005,
            sigma2_eps: 1.0,
            method: Method::Mle,
            at_boundary: false,
        };
        assert!(matches!(
            ci_sigma2_u(&est, 6, 16, 0.1, Sigma2UKind::Log, None),
            Err(Error::NotApplicable(_))
        ));
        est.sigma2_u = 0.0;
        assert!(matches!(
            ci_sigma2_u(&est, 6, 16, 0.1, Sigma2UKind::Log, None),
            Err(Error::Degenerate(_))
        ));
        est.sigma2_u = 0.5;
        let ci = ci_sigma2_u(&est, 6, 16, 0.1, Sigma2UKind::Log, None).unwrap();
        assert!(ci.lower > 0.0 && ci.lower < 0.5 && ci.upper > 0.5);
        // geometric symmetry about the estimate
        assert_relative_eq!(ci.lower * ci.upper, 0.25, max_relative = 1e-10);
    }

    #[test]
    fn chi_interval_scale_structure() {
        let est = VarianceEstimates {
            sigma2_u: 0.5,
            sigma2_eps: 1.0,
            method: Method::Mle,
            at_boundary: false,
        };
        let c1 = ci_sigma2_u(&est, 6, 16, 0.1, Sigma2UKind::Chi, None).unwrap();
        let est2 = VarianceEstimates {
            sigma2_u: 1.7,
            ..est
        };
        let c2 = ci_sigma2_u(&est2, 6, 16, 0.1, Sigma2UKind::Chi, None).unwrap();
        // bounds ratio independent of the estimate
        assert_relative_eq!(
            c1.upper / c1.lower,
            c2.upper / c2.lower,
            max_relative = 1e-10
        );
        let est0 = VarianceEstimates {
            sigma2_u: 0.0,
            ..est
        };
        assert!(ci_sigma2_u(&est0, 6, 16, 0.1, Sigma2UKind::Chi, None).is_err());
    }

    #[test]
    fn wald_interval_uses_method_plugin() {
        let d = BalancedData::from_rows(&[
            vec![9.8, 10.2, 9.9],
            vec![12.1, 11.8, 12.0],
            vec![10.9, 11.1, 11.0],
            vec![13.0, 12.7, 12.9],
        ])
        .unwrap();
        let table = anova_table(&d).unwrap();
        let est = estimate_mle(&table, 4, 3);
        let ci = ci_sigma2_u(&est, 4, 3, 0.05, Sigma2UKind::Wald, None).unwrap();
        let s22 = sigma22_plugin(est.sigma2_u, est.sigma2_eps, 3);
        let half = normal_quantile(0.975).unwrap() * (s22 / 4.0).sqrt();
        assert_relative_eq!(ci.upper, est.sigma2_u + half, max_relative = 1e-12);
    }
}
