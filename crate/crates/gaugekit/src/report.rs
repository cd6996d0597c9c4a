//! Self-contained analysis report for one gauge study.

use crate::anova::{anova_table, AnovaTable, BalancedData};
use crate::error::{Error, Result};
use crate::estimators::{
    assessment_params, estimate, rho_plugin, AssessmentParams, Method, SpecLimits,
    VarianceEstimates,
};
use crate::inference::{
    ci_derived, ci_ptr, ci_rho, ci_sigma2_eps, ci_sigma2_u, test_error_variance, test_rho,
    test_unit_variance, CiKind, ConfidenceInterval, DerivedTarget, Sigma2UKind, TestResult,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// What `analyze` should compute.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub alpha: f64,
    /// Estimation methods to report; the last one is also used where a
    /// single method must be chosen.
    pub methods: Vec<Method>,
    /// Threshold standard deviation for the error-variance test.
    pub sigma0: Option<f64>,
    /// Threshold ratio for the rho test.
    pub rho0: Option<f64>,
    pub spec_limits: Option<SpecLimits>,
    pub ci_kinds: Vec<CiKind>,
    pub log_eps: Option<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            alpha: 0.05,
            methods: Method::ALL.to_vec(),
            sigma0: None,
            rho0: None,
            spec_limits: None,
            ci_kinds: vec![
                CiKind::Sigma2EpsExact,
                CiKind::RhoExact,
                CiKind::RrExact,
                CiKind::SnrExact,
                CiKind::IccExact,
                CiKind::Sigma2UWald,
                CiKind::Sigma2ULog,
                CiKind::Sigma2UChi,
            ],
            log_eps: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
    pub units: usize,
    pub replicates: usize,
    pub n_values: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub sigma2_u: f64,
    pub sigma2_eps: f64,
    pub at_boundary: bool,
    /// Plug-in ratio; negative only for the ANOVA method.
    pub rho: f64,
    /// Absent when the raw ANOVA rho is negative (flagged in warnings).
    pub assessment: Option<AssessmentParams>,
}

/// A confidence interval plus the estimator it was built from, where that
/// matters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalReport {
    pub method: Option<Method>,
    #[serde(flatten)]
    pub interval: ConfidenceInterval,
}

/// Everything one analysis run produces. Re-running on the same input
/// reproduces the report exactly, `generated_at` aside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub tool: ToolInfo,
    pub input: InputInfo,
    pub alpha: f64,
    pub anova: AnovaTable,
    pub estimates: Vec<EstimateReport>,
    pub tests: Vec<TestResult>,
    pub intervals: Vec<IntervalReport>,
    pub warnings: Vec<String>,
    pub generated_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Run the full analysis pipeline over parsed data.
pub fn analyze(
    data: &BalancedData,
    options: &AnalysisOptions,
    input_path: &str,
    input_bytes: &[u8],
) -> Result<StudyReport> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::Spec(format!(
            "alpha must lie in (0,1), got {}",
            options.alpha
        )));
    }
    let (a, r) = (data.units(), data.replicates());
    let table = anova_table(data)?;
    let mut warnings = Vec::new();
    if a <= 2 {
        warnings.push(format!(
            "only {a} units: studies are normally designed with more than 2 randomly sampled units"
        ));
    }
    if table.ms_eps <= 0.0 {
        return Err(Error::Degenerate(
            "every replicate identical within every unit: no repeatability variance to assess"
                .into(),
        ));
    }

    let mut estimates = Vec::new();
    for &method in &options.methods {
        let est = estimate(method, &table, a, r);
        let rho = rho_plugin(&table, a, r, method)?;
        let assessment = if rho >= 0.0 {
            Some(assessment_params(
                rho,
                options.spec_limits,
                Some(est.sigma2_eps.sqrt()),
            )?)
        } else {
            warnings.push(format!(
                "ANOVA unit-variance estimate is negative ({:.6e}); this may indicate the \
                 variance component is not significantly different from zero (see the \
                 unit-variance test p-value); assessment ratios are reported for the \
                 non-negative methods",
                est.sigma2_u
            ));
            None
        };
        estimates.push(EstimateReport {
            method,
            sigma2_u: est.sigma2_u,
            sigma2_eps: est.sigma2_eps,
            at_boundary: est.at_boundary,
            rho,
            assessment,
        });
    }

    let mut tests = vec![test_unit_variance(&table, a, r)?];
    if let Some(sigma0) = options.sigma0 {
        tests.push(test_error_variance(&table, a, r, sigma0)?);
    }
    if let Some(rho0) = options.rho0 {
        tests.push(test_rho(&table, a, r, rho0)?);
    }

    let mut intervals = Vec::new();
    let rho_ci = ci_rho(&table, a, r, options.alpha)?;
    for &kind in &options.ci_kinds {
        match kind {
            CiKind::Sigma2EpsExact => intervals.push(IntervalReport {
                method: None,
                interval: ci_sigma2_eps(&table, a, r, options.alpha)?,
            }),
            CiKind::PtrExact => {
                if let Some(spec) = options.spec_limits {
                    intervals.push(IntervalReport {
                        method: None,
                        interval: ci_ptr(&table, a, r, options.alpha, spec)?,
                    });
                } else {
                    warnings.push(
                        "ptr_exact interval skipped: no specification limits given".into(),
                    );
                }
            }
            CiKind::RhoExact => {
                // Raw bounds plus the parameter-space truncation.
                intervals.push(IntervalReport {
                    method: None,
                    interval: rho_ci,
                });
                if rho_ci.lower < 0.0 {
                    intervals.push(IntervalReport {
                        method: None,
                        interval: rho_ci.truncated_at_zero(),
                    });
                }
            }
            CiKind::RrExact => intervals.push(IntervalReport {
                method: None,
                interval: ci_derived(&rho_ci, DerivedTarget::RrPct)?,
            }),
            CiKind::SnrExact => intervals.push(IntervalReport {
                method: None,
                interval: ci_derived(&rho_ci, DerivedTarget::Snr)?,
            }),
            CiKind::IccExact => intervals.push(IntervalReport {
                method: None,
                interval: ci_derived(&rho_ci, DerivedTarget::Icc)?,
            }),
            CiKind::Sigma2UWald | CiKind::Sigma2ULog | CiKind::Sigma2UChi => {
                let sub_kind = match kind {
                    CiKind::Sigma2UWald => Sigma2UKind::Wald,
                    CiKind::Sigma2ULog => Sigma2UKind::Log,
                    _ => Sigma2UKind::Chi,
                };
                for &method in &options.methods {
                    if method == Method::Anova {
                        // The large-sample intervals assume a non-negative
                        // estimate; the truncated methods provide it.
                        continue;
                    }
                    let est = estimate(method, &table, a, r);
                    let est = VarianceEstimates { ..est };
                    match ci_sigma2_u(&est, a, r, options.alpha, sub_kind, options.log_eps) {
                        Ok(interval) => intervals.push(IntervalReport {
                            method: Some(method),
                            interval,
                        }),
                        Err(Error::NotApplicable(msg)) | Err(Error::Degenerate(msg)) => {
                            warnings.push(format!(
                                "{} interval ({}) skipped: {msg}",
                                kind.name(),
                                method.name()
                            ));
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }

    Ok(StudyReport {
        tool: ToolInfo {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        input: InputInfo {
            path: input_path.into(),
            sha256: sha256_hex(input_bytes),
            units: a,
            replicates: r,
            n_values: a * r,
        },
        alpha: options.alpha,
        anova: table,
        estimates,
        tests,
        intervals,
        warnings,
        generated_at: chrono::Utc::now().to_rfc3339(),
    })
}

impl StudyReport {
    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("report serialization failed: {e}")))
    }

    /// The report with its timestamp blanked: the digest-stable form.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.generated_at = String::new();
        serde_json::to_string(&copy)
            .map_err(|e| Error::Data(format!("report serialization failed: {e}")))
    }
}
