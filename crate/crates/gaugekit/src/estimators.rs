//! Point estimation of the variance components and of every assessment
//! parameter derived from their ratio.
//!
//! Three methods are implemented: moment-matching ANOVA (unbiased, may go
//! negative), its non-negative truncation with a pooled error estimate on
//! the boundary branch (identical to REML for balanced normal data), and
//! maximum likelihood, whose between-unit mean square carries the a/(a−1)
//! scaling factor.

use crate::anova::AnovaTable;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Anova,
    Nanova,
    Mle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Anova, Method::Nanova, Method::Mle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Anova => "anova",
            Method::Nanova => "nanova",
            Method::Mle => "mle",
        }
    }

    /// Between-unit scaling factor β: a/(a−1) for maximum likelihood,
    /// 1 for the moment methods.
    pub fn beta(self, a: usize) -> f64 {
        match self {
            Method::Mle => a as f64 / (a as f64 - 1.0),
            Method::Anova | Method::Nanova => 1.0,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "anova" => Ok(Method::Anova),
            "nanova" | "reml" => Ok(Method::Nanova),
            "mle" | "ml" => Ok(Method::Mle),
            other => Err(Error::Spec(format!("unknown estimation method '{other}'"))),
        }
    }
}

/// Estimated variance components.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarianceEstimates {
    /// Unit variance component; possibly negative for the ANOVA method.
    pub sigma2_u: f64,
    pub sigma2_eps: f64,
    pub method: Method,
    /// True when a non-negative method was forced to the boundary σ²u = 0.
    pub at_boundary: bool,
}

/// ANOVA (method-of-moments) estimators: σ̂²u = (MSu − MSε)/r, σ̂²ε = MSε.
/// The unit component is returned as-is, negative values included.
pub fn estimate_anova(table: &AnovaTable, r: usize) -> VarianceEstimates {
    VarianceEstimates {
        sigma2_u: (table.ms_u - table.ms_eps) / r as f64,
        sigma2_eps: table.ms_eps,
        method: Method::Anova,
        at_boundary: false,
    }
}

/// Non-negative ANOVA estimators; on the boundary branch the error variance
/// becomes the pooled SSt/(ar − 1).
pub fn estimate_nanova(table: &AnovaTable, a: usize, r: usize) -> VarianceEstimates {
    let n = (a * r) as f64;
    VarianceEstimates {
        sigma2_u: ((table.ms_u - table.ms_eps) / r as f64).max(0.0),
        sigma2_eps: (table.ss_t / (n - 1.0)).min(table.ms_eps),
        method: Method::Nanova,
        at_boundary: table.ms_u <= table.ms_eps,
    }
}

/// Maximum likelihood estimators with β = a/(a−1); the boundary branch
/// (MSu < β·MSε) pools the error variance to SSt/(ar).
pub fn estimate_mle(table: &AnovaTable, a: usize, r: usize) -> VarianceEstimates {
    let beta = Method::Mle.beta(a);
    let n = (a * r) as f64;
    VarianceEstimates {
        sigma2_u: ((table.ms_u / beta - table.ms_eps) / r as f64).max(0.0),
        sigma2_eps: (table.ss_t / n).min(table.ms_eps),
        method: Method::Mle,
        at_boundary: table.ms_u < beta * table.ms_eps,
    }
}

pub fn estimate(method: Method, table: &AnovaTable, a: usize, r: usize) -> VarianceEstimates {
    match method {
        Method::Anova => estimate_anova(table, r),
        Method::Nanova => estimate_nanova(table, a, r),
        Method::Mle => estimate_mle(table, a, r),
    }
}

/// Plug-in estimator of ρ = σ²u/σ²ε for the given method. The ANOVA value
/// may be negative; the other two truncate at zero.
pub fn rho_plugin(table: &AnovaTable, a: usize, r: usize, method: Method) -> Result<f64> {
    if table.ms_eps <= 0.0 {
        return Err(Error::Degenerate(
            "zero repeatability variance: rho is undefined".into(),
        ));
    }
    let ratio = table.ms_u / table.ms_eps;
    let rf = r as f64;
    Ok(match method {
        Method::Anova => (ratio - 1.0) / rf,
        Method::Nanova => ((ratio - 1.0) / rf).max(0.0),
        Method::Mle => ((ratio / method.beta(a) - 1.0) / rf).max(0.0),
    })
}

/// AIAG acceptance bands on the %R&R ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// %R&R below 10%.
    Acceptable,
    /// %R&R between 10% and 30%: depends on application and cost.
    Conditional,
    /// %R&R above 30%: corrective action recommended.
    Unacceptable,
}

/// Signal-to-noise bands of Steiner and MacKay, reported alongside the AIAG
/// verdict rather than merged with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrBand {
    /// SNR above 3.
    Valid,
    /// SNR in [2, 3].
    Marginal,
    /// SNR below 2.
    Unacceptable,
}

/// Process tolerance window for the precision-to-tolerance ratio.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpecLimits {
    pub lower: f64,
    pub upper: f64,
    /// Width multiplier for the measurement spread; 6 covers 99.73% of a
    /// normal distribution, 5.15 covers 99%.
    pub kappa: f64,
}

impl SpecLimits {
    pub fn new(lower: f64, upper: f64, kappa: f64) -> Result<Self> {
        if !(upper > lower) {
            return Err(Error::Spec(format!(
                "specification limits require UL > LL, got LL={lower}, UL={upper}"
            )));
        }
        if !(kappa > 0.0) {
            return Err(Error::Spec(format!("kappa must be positive, got {kappa}")));
        }
        Ok(SpecLimits {
            lower,
            upper,
            kappa,
        })
    }
}

pub const DEFAULT_KAPPA: f64 = 6.0;

/// The assessment parameters derived from ρ, with the AIAG verdict and the
/// SNR band reported side by side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessmentParams {
    pub rho: f64,
    pub snr: f64,
    /// Gauge discrimination ratio √2·SNR; AIAG regards 5+ as adequate
    /// resolution and below 2 as unusable, no combined verdict is formed.
    pub discrimination_ratio: f64,
    pub rr_pct: f64,
    pub icc: f64,
    pub ptr: Option<f64>,
    pub verdict: Verdict,
    pub snr_band: SnrBand,
}

/// Convert ρ into %R&R, SNR, ICC, the discrimination ratio, and optionally
/// PTR, attaching the acceptance verdicts.
pub fn assessment_params(
    rho: f64,
    spec: Option<SpecLimits>,
    sigma_eps: Option<f64>,
) -> Result<AssessmentParams> {
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!(
            "assessment requires rho >= 0, got {rho}"
        )));
    }
    let rr_pct = 100.0 / (1.0 + rho).sqrt();
    let snr = rho.sqrt();
    let icc = if rho == 0.0 { 0.0 } else { 1.0 / (1.0 + 1.0 / rho) };

    let ptr = match spec {
        None => None,
        Some(s) => {
            let sigma_eps = sigma_eps.ok_or_else(|| {
                Error::Spec("PTR requires an error standard deviation".into())
            })?;
            if !(sigma_eps > 0.0) {
                return Err(Error::Spec(format!(
                    "PTR requires sigma_eps > 0, got {sigma_eps}"
                )));
            }
            Some(s.kappa * sigma_eps / (s.upper - s.lower))
        }
    };

    let verdict = if rr_pct < 10.0 {
        Verdict::Acceptable
    } else if rr_pct <= 30.0 {
        Verdict::Conditional
    } else {
        Verdict::Unacceptable
    };
    let snr_band = if snr > 3.0 {
        SnrBand::Valid
    } else if snr >= 2.0 {
        SnrBand::Marginal
    } else {
        SnrBand::Unacceptable
    };

    Ok(AssessmentParams {
        rho,
        snr,
        discrimination_ratio: std::f64::consts::SQRT_2 * snr,
        rr_pct,
        icc,
        ptr,
        verdict,
        snr_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anova::{anova_table, BalancedData};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn hand_table() -> AnovaTable {
        let d =
            BalancedData::from_rows(&[vec![1.0, 3.0], vec![5.0, 7.0], vec![3.0, 5.0]]).unwrap();
        anova_table(&d).unwrap()
    }

    #[test]
    fn anova_estimates_on_hand_dataset() {
        let e = estimate_anova(&hand_table(), 2);
        assert_abs_diff_eq!(e.sigma2_u, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.sigma2_eps, 2.0, epsilon = 1e-12);
        assert!(!e.at_boundary);
    }

    #[test]
    fn nanova_estimates_on_hand_dataset() {
        let e = estimate_nanova(&hand_table(), 3, 2);
        assert_abs_diff_eq!(e.sigma2_u, 3.0, epsilon = 1e-12);
        // min(22/5, 2) = 2
        assert_abs_diff_eq!(e.sigma2_eps, 2.0, epsilon = 1e-12);
        assert!(!e.at_boundary);
    }

    #[test]
    fn mle_estimates_on_hand_dataset() {
        let e = estimate_mle(&hand_table(), 3, 2);
        // beta = 3/2, sigma2_u = (8/1.5 - 2)/2 = 5/3
        assert_relative_eq!(e.sigma2_u, 5.0 / 3.0, max_relative = 1e-12);
        assert_abs_diff_eq!(e.sigma2_eps, 2.0, epsilon = 1e-12);
        assert!(!e.at_boundary);
    }

    #[test]
    fn rho_plugins_on_hand_dataset() {
        let t = hand_table();
        assert_abs_diff_eq!(rho_plugin(&t, 3, 2, Method::Anova).unwrap(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho_plugin(&t, 3, 2, Method::Nanova).unwrap(), 1.5, epsilon = 1e-12);
        assert_relative_eq!(
            rho_plugin(&t, 3, 2, Method::Mle).unwrap(),
            5.0 / 6.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn boundary_branches() {
        // Unit means all equal: MSu = 0 < MSε.
        let d =
            BalancedData::from_rows(&[vec![1.0, 3.0], vec![0.0, 4.0], vec![3.0, 1.0]]).unwrap();
        let t = anova_table(&d).unwrap();
        let (a, r) = (3, 2);

        let e = estimate_anova(&t, r);
        assert!(e.sigma2_u < 0.0);
        assert!(!e.at_boundary);

        let e = estimate_nanova(&t, a, r);
        assert_eq!(e.sigma2_u, 0.0);
        assert!(e.at_boundary);
        // pooled branch: SSt/(ar-1)
        assert_relative_eq!(e.sigma2_eps, t.ss_t / 5.0, max_relative = 1e-12);

        let e = estimate_mle(&t, a, r);
        assert_eq!(e.sigma2_u, 0.0);
        assert!(e.at_boundary);
        assert_relative_eq!(e.sigma2_eps, t.ss_t / 6.0, max_relative = 1e-12);

        assert_eq!(rho_plugin(&t, a, r, Method::Nanova).unwrap(), 0.0);
        assert!(rho_plugin(&t, a, r, Method::Anova).unwrap() < 0.0);
    }

    #[test]
    fn mle_boundary_is_exactly_beta() {
        // Construct ms_u = beta * ms_eps: at_boundary is edge-exclusive.
        let mut t = hand_table();
        let beta = 3.0 / 2.0;
        t.ms_u = beta * t.ms_eps;
        let e = estimate_mle(&t, 3, 2);
        assert_eq!(e.sigma2_u, 0.0);
        assert!(!e.at_boundary);
        assert_eq!(rho_plugin(&t, 3, 2, Method::Mle).unwrap(), 0.0);
    }

    #[test]
    fn constant_data_degenerates() {
        let d = BalancedData::new(3, 2, vec![1.0; 6]).unwrap();
        let t = anova_table(&d).unwrap();
        let e = estimate_nanova(&t, 3, 2);
        assert_eq!((e.sigma2_u, e.sigma2_eps), (0.0, 0.0));
        assert!(rho_plugin(&t, 3, 2, Method::Nanova).is_err());
    }

    #[test]
    fn assessment_at_rho_zero() {
        let p = assessment_params(0.0, None, None).unwrap();
        assert_eq!(p.rr_pct, 100.0);
        assert_eq!(p.snr, 0.0);
        assert_eq!(p.icc, 0.0);
        assert_eq!(p.verdict, Verdict::Unacceptable);
        assert_eq!(p.snr_band, SnrBand::Unacceptable);
    }

    #[test]
    fn assessment_identities_at_rho_1_5() {
        let p = assessment_params(1.5, None, None).unwrap();
        assert_relative_eq!(p.rr_pct, 100.0 / 2.5f64.sqrt(), max_relative = 1e-12);
        assert_abs_diff_eq!(p.rr_pct, 63.245_553, epsilon = 1e-5);
        assert_abs_diff_eq!(p.snr, 1.224_745, epsilon = 1e-5);
        assert_abs_diff_eq!(p.icc, 0.6, epsilon = 1e-12);
        assert_eq!(p.verdict, Verdict::Unacceptable);
    }

    #[test]
    fn ptr_from_spec_limits() {
        let spec = SpecLimits::new(0.0, 60.0, 6.0).unwrap();
        let p = assessment_params(1.5, Some(spec), Some(1.0)).unwrap();
        assert_abs_diff_eq!(p.ptr.unwrap(), 0.1, epsilon = 1e-12);
        assert!(SpecLimits::new(1.0, 1.0, 6.0).is_err());
        assert!(assessment_params(1.0, Some(spec), None).is_err());
    }

    #[test]
    fn verdict_bands() {
        // %R&R < 10 needs rho > 99.
        assert_eq!(assessment_params(120.0, None, None).unwrap().verdict, Verdict::Acceptable);
        assert_eq!(assessment_params(20.0, None, None).unwrap().verdict, Verdict::Conditional);
        // boundary: rr = 30 at rho = 100/9 − 1
        let rho_30 = 100.0 / 9.0 - 1.0;
        assert_eq!(
            assessment_params(rho_30, None, None).unwrap().verdict,
            Verdict::Conditional
        );
        assert_eq!(assessment_params(8.0, None, None).unwrap().verdict, Verdict::Unacceptable);
    }

    #[test]
    fn mle_approaches_anova_for_large_a() {
        let t = hand_table();
        // beta -> 1: the MLE rho approaches the ANOVA rho.
        let rho_anova = rho_plugin(&t, 3, 2, Method::Anova).unwrap();
        let rho_mle_big_a = ((t.ms_u / t.ms_eps / (10_000.0 / 9_999.0) - 1.0) / 2.0).max(0.0);
        assert_relative_eq!(rho_mle_big_a, rho_anova, max_relative = 1e-3);
    }
}
