//! Deterministic parallel simulation studies.
//!
//! Every replication owns an RNG substream keyed by (master seed, stream
//! index), and reductions run over fixed-size chunks merged in index order,
//! so results are bit-identical for any worker count or schedule.

use crate::anova::{anova_sums, AnovaTable, BalancedData};
use crate::dist::{chi2_cdf, chi2_quantile, f_quantile, normal_cdf, normal_quantile, RngStream};
use crate::error::{Error, Result};
use crate::estimators::{estimate, Method, SpecLimits};
use crate::inference::{chi_bounds, log_bounds, wald_bounds, CiKind};
use crate::theory::{
    self, asymptotic_covariance, prob_boundary, prob_negative_anova, sigma22_plugin, ModelTruth,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grid points are given disjoint stream-index ranges with this stride.
const POINT_STRIDE: u64 = 1 << 40;
const CHUNK: u64 = 2048;

/// Configuration of a simulation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub a: usize,
    pub r: usize,
    pub sigma2_u: f64,
    pub sigma2_eps: f64,
    #[serde(default = "default_n_reps")]
    pub n_reps: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Grid of true ρ values for the sweep studies; σ²u is set to ρ·σ²ε
    /// at each point.
    #[serde(default)]
    pub rho_grid: Option<Vec<f64>>,
    /// Estimates below this count as "near zero": they are tallied, and the
    /// log interval is filtered on them.
    #[serde(default = "default_boundary_threshold")]
    pub boundary_threshold: f64,
    #[serde(default = "default_ci_kinds")]
    pub ci_kinds: Vec<CiKind>,
    #[serde(default = "default_methods")]
    pub estimator_methods: Vec<Method>,
    /// Estimator feeding σ̂²u and the σ̂₂₂ plug-in in the coverage study.
    #[serde(default = "default_ci_estimator")]
    pub ci_estimator: Method,
    /// Tolerance window enabling the PTR interval.
    #[serde(default)]
    pub spec_limits: Option<SpecLimits>,
}

fn default_n_reps() -> u64 {
    500_000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_boundary_threshold() -> f64 {
    0.01
}
fn default_ci_kinds() -> Vec<CiKind> {
    vec![
        CiKind::Sigma2EpsExact,
        CiKind::RhoExact,
        CiKind::RrExact,
        CiKind::SnrExact,
        CiKind::IccExact,
        CiKind::Sigma2UWald,
        CiKind::Sigma2ULog,
        CiKind::Sigma2UChi,
    ]
}
fn default_methods() -> Vec<Method> {
    vec![Method::Anova, Method::Nanova, Method::Mle]
}
fn default_ci_estimator() -> Method {
    Method::Mle
}

impl SimConfig {
    pub fn new(a: usize, r: usize, sigma2_u: f64, sigma2_eps: f64) -> Self {
        SimConfig {
            a,
            r,
            sigma2_u,
            sigma2_eps,
            n_reps: default_n_reps(),
            master_seed: 0,
            alpha: default_alpha(),
            rho_grid: None,
            boundary_threshold: default_boundary_threshold(),
            ci_kinds: default_ci_kinds(),
            estimator_methods: default_methods(),
            ci_estimator: default_ci_estimator(),
            spec_limits: None,
        }
    }

    /// Validate every field, reporting all offending fields at once.
    pub fn validate(&self) -> Result<()> {
        let mut faults = Vec::new();
        if self.a < 2 {
            faults.push(format!("a: need at least 2 units, got {}", self.a));
        }
        if self.r < 2 {
            faults.push(format!("r: need at least 2 replicates, got {}", self.r));
        }
        if !(self.sigma2_u >= 0.0 && self.sigma2_u.is_finite()) {
            faults.push(format!("sigma2_u: must be >= 0, got {}", self.sigma2_u));
        }
        if !(self.sigma2_eps > 0.0 && self.sigma2_eps.is_finite()) {
            faults.push(format!("sigma2_eps: must be > 0, got {}", self.sigma2_eps));
        }
        if self.sigma2_u == 0.0 && self.sigma2_eps == 0.0 {
            faults.push("sigma2_u, sigma2_eps: both zero is degenerate".into());
        }
        if self.n_reps == 0 {
            faults.push("n_reps: must be at least 1".into());
        }
        if self.n_reps >= POINT_STRIDE {
            faults.push(format!("n_reps: must be below 2^40, got {}", self.n_reps));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            faults.push(format!("alpha: must lie in (0,1), got {}", self.alpha));
        }
        if let Some(grid) = &self.rho_grid {
            if grid.is_empty() {
                faults.push("rho_grid: empty".into());
            }
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                faults.push("rho_grid: values must be finite and non-negative".into());
            }
            if grid.windows(2).any(|w| w[0] > w[1]) {
                faults.push("rho_grid: must be sorted ascending".into());
            }
        }
        if !(self.boundary_threshold >= 0.0) {
            faults.push(format!(
                "boundary_threshold: must be >= 0, got {}",
                self.boundary_threshold
            ));
        }
        if self.ci_kinds.is_empty() {
            faults.push("ci_kinds: empty".into());
        }
        if self.estimator_methods.is_empty() {
            faults.push("estimator_methods: empty".into());
        }
        if faults.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(faults.join("; ")))
        }
    }

    fn truth(&self) -> Result<ModelTruth> {
        ModelTruth::new(self.a, self.r, self.sigma2_u, self.sigma2_eps)
    }
}

/// One metric at one grid point, in long format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub a: usize,
    pub r: usize,
    pub rho: f64,
    /// Estimator or interval the metric belongs to, if any.
    pub method: Option<String>,
    pub metric: String,
    pub value: f64,
    /// Monte Carlo standard error where the metric is a sample estimate.
    pub mc_se: Option<f64>,
    /// Matching theoretical value where one exists.
    pub theory: Option<f64>,
}

/// Study output: the configuration echo plus long-format metric rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSummary {
    pub study: String,
    pub config: SimConfig,
    pub rows: Vec<SummaryRow>,
}

impl SimSummary {
    /// RFC 4180 CSV, one row per metric, floats at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,r,rho,method,metric,value,mc_se,theory\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.a,
                row.r,
                fmt_f64(row.rho),
                row.method.as_deref().unwrap_or(""),
                row.metric,
                fmt_f64(row.value),
                row.mc_se.map(fmt_f64).unwrap_or_default(),
                row.theory.map(fmt_f64).unwrap_or_default(),
            ));
        }
        out
    }

    pub fn find(&self, method: Option<&str>, metric: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|row| row.method.as_deref() == method && row.metric == metric)
    }
}

/// 17 significant digits: enough for exact f64 round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Compensated (Kahan–Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: Kahan) {
        self.add(other.comp);
        self.add(other.sum);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Chunked deterministic map-reduce over replication indices: chunks are
/// processed in parallel but merged in fixed index order.
fn chunked_reduce<A, MakeF, FillF, MergeF>(
    n_reps: u64,
    make: MakeF,
    fill: FillF,
    merge: MergeF,
) -> A
where
    A: Send,
    MakeF: Fn() -> A + Sync + Send,
    FillF: Fn(&mut A, std::ops::Range<u64>) + Sync + Send,
    MergeF: Fn(&mut A, A),
{
    let n_chunks = n_reps.div_ceil(CHUNK);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_reps);
            let mut acc = make();
            fill(&mut acc, lo..hi);
            acc
        })
        .collect();
    let mut total = make();
    for p in partials {
        merge(&mut total, p);
    }
    total
}

/// Simulate one balanced dataset: Y_ij = U_i + ε_ij with the configured
/// variances, from the substream (master_seed, replication_index). The
/// general mean is fixed at zero; every statistic in scope is location
/// invariant.
pub fn simulate_dataset(config: &SimConfig, replication_index: u64) -> Result<BalancedData> {
    config.validate()?;
    let mut data = BalancedData::new(config.a, config.r, vec![0.0; config.a * config.r])?;
    let mut stream = RngStream::new(config.master_seed, replication_index);
    fill_dataset(
        &mut data,
        config.sigma2_u.sqrt(),
        config.sigma2_eps.sqrt(),
        &mut stream,
    );
    Ok(data)
}

/// Draw order is fixed: the unit effect, then its replicates, unit by unit.
fn fill_dataset(data: &mut BalancedData, sd_u: f64, sd_eps: f64, stream: &mut RngStream) {
    let (a, r) = (data.units(), data.replicates());
    let values = data.values_mut();
    for i in 0..a {
        let u = if sd_u > 0.0 {
            sd_u * stream.standard_normal()
        } else {
            0.0
        };
        for j in 0..r {
            values[i * r + j] = u + sd_eps * stream.standard_normal();
        }
    }
}

fn lean_table(data: &BalancedData) -> AnovaTable {
    let (a, r) = (data.units(), data.replicates());
    let (ss_u, ss_eps, ss_t, grand_mean) = anova_sums(data);
    let df_u = a - 1;
    let df_eps = a * (r - 1);
    AnovaTable {
        ss_u,
        ss_eps,
        ss_t,
        ms_u: ss_u / df_u as f64,
        ms_eps: ss_eps / df_eps as f64,
        df_u,
        df_eps,
        grand_mean,
        unit_means: Vec::new(),
    }
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Study 1: probability of a negative ANOVA estimate across a rho grid.
// ---------------------------------------------------------------------------

#[derive(Default, Clone)]
struct CountAcc {
    negative: u64,
}

/// Empirical Pr(MSu < MSε) over the ρ grid, paired with the exact value.
pub fn run_negative_prob_study(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let grid = config
        .rho_grid
        .clone()
        .ok_or_else(|| Error::Config("rho_grid: required for the negative-probability study".into()))?;

    let mut rows = Vec::new();
    for (pi, &rho) in grid.iter().enumerate() {
        let sigma2_u = rho * config.sigma2_eps;
        let truth = ModelTruth::new(config.a, config.r, sigma2_u, config.sigma2_eps)?;
        let (sd_u, sd_eps) = (sigma2_u.sqrt(), config.sigma2_eps.sqrt());
        let base = pi as u64 * POINT_STRIDE;

        let acc = chunked_reduce(
            config.n_reps,
            CountAcc::default,
            |acc, range| {
                let mut scratch =
                    BalancedData::new(config.a, config.r, vec![0.0; config.a * config.r]).unwrap();
                for rep in range {
                    let mut stream = RngStream::new(config.master_seed, base + rep);
                    fill_dataset(&mut scratch, sd_u, sd_eps, &mut stream);
                    let t = lean_table(&scratch);
                    if t.ms_u < t.ms_eps {
                        acc.negative += 1;
                    }
                }
            },
            |a, b| a.negative += b.negative,
        );

        let p_hat = acc.negative as f64 / config.n_reps as f64;
        rows.push(SummaryRow {
            a: config.a,
            r: config.r,
            rho,
            method: None,
            metric: "pr_negative".into(),
            value: p_hat,
            mc_se: Some(binomial_se(p_hat, config.n_reps)),
            theory: Some(prob_negative_anova(&truth)?),
        });
    }
    Ok(SimSummary {
        study: "negprob".into(),
        config: config.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Study 2: estimator bias / SE across a rho grid.
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct MomentAcc {
    p1: Kahan,
    p2: Kahan,
    p3: Kahan,
    p4: Kahan,
    boundary: u64,
}

impl Default for MomentAcc {
    fn default() -> Self {
        MomentAcc {
            p1: Kahan::default(),
            p2: Kahan::default(),
            p3: Kahan::default(),
            p4: Kahan::default(),
            boundary: 0,
        }
    }
}

impl MomentAcc {
    #[inline]
    fn add(&mut self, x: f64) {
        self.p1.add(x);
        let x2 = x * x;
        self.p2.add(x2);
        self.p3.add(x2 * x);
        self.p4.add(x2 * x2);
    }

    fn merge(&mut self, other: &MomentAcc) {
        self.p1.merge(other.p1);
        self.p2.merge(other.p2);
        self.p3.merge(other.p3);
        self.p4.merge(other.p4);
        self.boundary += other.boundary;
    }
}

/// Empirical relative bias and relative SE of ρ̂ for each method across the
/// ρ grid, with boundary frequencies, all paired against theory.
pub fn run_estimator_study(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let grid = config
        .rho_grid
        .clone()
        .ok_or_else(|| Error::Config("rho_grid: required for the estimator study".into()))?;
    let methods = config.estimator_methods.clone();
    let n = config.n_reps;
    let nf = n as f64;

    let mut rows = Vec::new();
    for (pi, &rho) in grid.iter().enumerate() {
        let sigma2_u = rho * config.sigma2_eps;
        let truth = ModelTruth::new(config.a, config.r, sigma2_u, config.sigma2_eps)?;
        let (sd_u, sd_eps) = (sigma2_u.sqrt(), config.sigma2_eps.sqrt());
        let base = pi as u64 * POINT_STRIDE;
        let beta_mle = Method::Mle.beta(config.a);

        let accs = chunked_reduce(
            n,
            || vec![MomentAcc::default(); methods.len()],
            |accs, range| {
                let mut scratch =
                    BalancedData::new(config.a, config.r, vec![0.0; config.a * config.r]).unwrap();
                let rf = config.r as f64;
                for rep in range {
                    let mut stream = RngStream::new(config.master_seed, base + rep);
                    fill_dataset(&mut scratch, sd_u, sd_eps, &mut stream);
                    let t = lean_table(&scratch);
                    let ratio = t.ms_u / t.ms_eps;
                    for (k, &method) in methods.iter().enumerate() {
                        let (rho_hat, at_boundary) = match method {
                            Method::Anova => ((ratio - 1.0) / rf, ratio <= 1.0),
                            Method::Nanova => (((ratio - 1.0) / rf).max(0.0), ratio <= 1.0),
                            Method::Mle => (
                                ((ratio / beta_mle - 1.0) / rf).max(0.0),
                                ratio < beta_mle,
                            ),
                        };
                        accs[k].add(rho_hat);
                        if at_boundary {
                            accs[k].boundary += 1;
                        }
                    }
                }
            },
            |a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.merge(y);
                }
            },
        );

        for (k, &method) in methods.iter().enumerate() {
            let acc = &accs[k];
            let mean = acc.p1.value() / nf;
            let var = (acc.p2.value() / nf - mean * mean).max(0.0);
            let m3 = acc.p3.value() / nf;
            let m4 = acc.p4.value() / nf;
            let m4c = m4 - 4.0 * mean * m3 + 6.0 * mean * mean * (acc.p2.value() / nf)
                - 3.0 * mean.powi(4);
            let se_mean = (var / nf).sqrt();
            let se_sd = if var > 0.0 {
                ((m4c - var * var).max(0.0) / (4.0 * var * nf)).sqrt()
            } else {
                0.0
            };

            let theory_bias = theory::relative_bias_rho(&truth, method).ok();
            let theory_se = theory::relative_se_rho(&truth, method).ok();
            let (bias_metric, bias_value, bias_se, bias_theory) = if rho > 0.0 {
                (
                    "rel_bias_pct",
                    (mean / rho - 1.0) * 100.0,
                    100.0 * se_mean / rho,
                    theory_bias.filter(|m| m.is_relative).map(|m| m.value),
                )
            } else {
                (
                    "abs_bias",
                    mean,
                    se_mean,
                    theory_bias.filter(|m| !m.is_relative).map(|m| m.value),
                )
            };
            rows.push(SummaryRow {
                a: config.a,
                r: config.r,
                rho,
                method: Some(method.name().into()),
                metric: bias_metric.into(),
                value: bias_value,
                mc_se: Some(bias_se),
                theory: bias_theory,
            });

            let (se_metric, se_value, se_se, se_theory) = if rho > 0.0 {
                (
                    "rel_se_pct",
                    100.0 * var.sqrt() / rho,
                    100.0 * se_sd / rho,
                    theory_se.filter(|m| m.is_relative).map(|m| m.value),
                )
            } else {
                (
                    "abs_se",
                    var.sqrt(),
                    se_sd,
                    theory_se.filter(|m| !m.is_relative).map(|m| m.value),
                )
            };
            rows.push(SummaryRow {
                a: config.a,
                r: config.r,
                rho,
                method: Some(method.name().into()),
                metric: se_metric.into(),
                value: se_value,
                mc_se: Some(se_se),
                theory: se_theory,
            });

            let freq = acc.boundary as f64 / nf;
            let boundary_theory = match method {
                Method::Anova => prob_negative_anova(&truth).ok(),
                Method::Nanova | Method::Mle => prob_boundary(&truth, method).ok(),
            };
            rows.push(SummaryRow {
                a: config.a,
                r: config.r,
                rho,
                method: Some(method.name().into()),
                metric: "boundary_freq".into(),
                value: freq,
                mc_se: Some(binomial_se(freq, n)),
                theory: boundary_theory,
            });
        }
    }
    Ok(SimSummary {
        study: "estimator".into(),
        config: config.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Study 3: confidence-interval coverage and width at one configuration.
// ---------------------------------------------------------------------------

#[derive(Clone, Default)]
struct CiAcc {
    covered: u64,
    width: Kahan,
    width_sq: Kahan,
    n_width: u64,
    skipped: u64,
}

#[derive(Clone)]
struct CoverageAcc {
    per_kind: Vec<CiAcc>,
    below_threshold: u64,
    at_boundary: u64,
}

struct KindPlan {
    kind: CiKind,
    /// True parameter value the interval is meant to cover.
    target: f64,
}

/// Coverage probabilities, mean widths, and near-zero tallies for the
/// configured interval kinds at the configured truth.
pub fn run_coverage_study(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let truth = config.truth()?;
    let rho = truth.rho();
    let (a, r) = (config.a, config.r);
    let (af, rf) = (a as f64, r as f64);
    let n = config.n_reps;
    let alpha = config.alpha;

    // Per-kind true targets; PTR only with spec limits present.
    let mut plans: Vec<KindPlan> = Vec::new();
    for &kind in &config.ci_kinds {
        let target = match kind {
            CiKind::Sigma2EpsExact => config.sigma2_eps,
            CiKind::PtrExact => match config.spec_limits {
                Some(s) => s.kappa * config.sigma2_eps.sqrt() / (s.upper - s.lower),
                None => {
                    return Err(Error::Config(
                        "spec_limits: required when ci_kinds includes ptr_exact".into(),
                    ))
                }
            },
            CiKind::RhoExact => rho,
            CiKind::RrExact => 100.0 / (1.0 + rho).sqrt(),
            CiKind::SnrExact => rho.sqrt(),
            CiKind::IccExact => {
                if rho == 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 + 1.0 / rho)
                }
            }
            CiKind::Sigma2UWald | CiKind::Sigma2ULog | CiKind::Sigma2UChi => config.sigma2_u,
        };
        plans.push(KindPlan { kind, target });
    }

    // Critical values are constant across replications.
    let df_eps = (a * (r - 1)) as f64;
    let df_u = (a - 1) as f64;
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let chi_eps = (
        chi2_quantile(alpha / 2.0, df_eps)?,
        chi2_quantile(1.0 - alpha / 2.0, df_eps)?,
    );
    let chi_a1 = (
        chi2_quantile(alpha / 2.0, df_u)?,
        chi2_quantile(1.0 - alpha / 2.0, df_u)?,
    );
    let f_crit = (
        f_quantile(alpha / 2.0, df_u, df_eps)?,
        f_quantile(1.0 - alpha / 2.0, df_u, df_eps)?,
    );
    let ptr_scale = config
        .spec_limits
        .map(|s| s.kappa / (s.upper - s.lower))
        .unwrap_or(0.0);
    let (sd_u, sd_eps) = (config.sigma2_u.sqrt(), config.sigma2_eps.sqrt());
    let threshold = config.boundary_threshold;
    let ci_method = config.ci_estimator;

    let acc = chunked_reduce(
        n,
        || CoverageAcc {
            per_kind: vec![CiAcc::default(); plans.len()],
            below_threshold: 0,
            at_boundary: 0,
        },
        |acc, range| {
            let mut scratch = BalancedData::new(a, r, vec![0.0; a * r]).unwrap();
            for rep in range {
                let mut stream = RngStream::new(config.master_seed, rep);
                fill_dataset(&mut scratch, sd_u, sd_eps, &mut stream);
                let t = lean_table(&scratch);
                let est = estimate(ci_method, &t, a, r);
                let s22 = sigma22_plugin(est.sigma2_u, est.sigma2_eps, r);
                if est.sigma2_u < threshold {
                    acc.below_threshold += 1;
                }
                if est.at_boundary {
                    acc.at_boundary += 1;
                }
                let ratio = if t.ms_eps > 0.0 {
                    t.ms_u / t.ms_eps
                } else {
                    f64::INFINITY
                };
                let rho_bounds = (
                    (ratio / f_crit.1 - 1.0) / rf,
                    (ratio / f_crit.0 - 1.0) / rf,
                );

                for (k, plan) in plans.iter().enumerate() {
                    let slot = &mut acc.per_kind[k];
                    let bounds = match plan.kind {
                        CiKind::Sigma2EpsExact => (t.ss_eps / chi_eps.1, t.ss_eps / chi_eps.0),
                        CiKind::PtrExact => (
                            ptr_scale * (t.ss_eps / chi_eps.1).sqrt(),
                            ptr_scale * (t.ss_eps / chi_eps.0).sqrt(),
                        ),
                        CiKind::RhoExact => rho_bounds,
                        CiKind::RrExact => (
                            100.0 / (1.0 + rho_bounds.1).sqrt(),
                            100.0 / (1.0 + rho_bounds.0).sqrt(),
                        ),
                        CiKind::SnrExact => (
                            rho_bounds.0.max(0.0).sqrt(),
                            rho_bounds.1.max(0.0).sqrt(),
                        ),
                        CiKind::IccExact => {
                            let m = |x: f64| {
                                let x = x.max(0.0);
                                if x == 0.0 {
                                    0.0
                                } else {
                                    1.0 / (1.0 + 1.0 / x)
                                }
                            };
                            (m(rho_bounds.0), m(rho_bounds.1))
                        }
                        CiKind::Sigma2UWald => wald_bounds(est.sigma2_u, s22, af, z),
                        CiKind::Sigma2ULog => {
                            if est.sigma2_u <= threshold {
                                slot.skipped += 1;
                                continue;
                            }
                            log_bounds(est.sigma2_u, s22, af, z)
                        }
                        CiKind::Sigma2UChi => chi_bounds(est.sigma2_u, af, chi_a1.0, chi_a1.1),
                    };
                    if bounds.0 <= plan.target && plan.target <= bounds.1 {
                        slot.covered += 1;
                    }
                    let w = bounds.1 - bounds.0;
                    slot.width.add(w);
                    slot.width_sq.add(w * w);
                    slot.n_width += 1;
                }
            }
        },
        |a, b| {
            for (x, y) in a.per_kind.iter_mut().zip(&b.per_kind) {
                x.covered += y.covered;
                x.width.merge(y.width);
                x.width_sq.merge(y.width_sq);
                x.n_width += y.n_width;
                x.skipped += y.skipped;
            }
            a.below_threshold += b.below_threshold;
            a.at_boundary += b.at_boundary;
        },
    );

    let mut rows = Vec::new();
    for (k, plan) in plans.iter().enumerate() {
        let slot = &acc.per_kind[k];
        let denom = slot.n_width.max(1);
        let coverage = slot.covered as f64 / denom as f64;
        let exact = matches!(
            plan.kind,
            CiKind::Sigma2EpsExact
                | CiKind::PtrExact
                | CiKind::RhoExact
                | CiKind::RrExact
                | CiKind::SnrExact
                | CiKind::IccExact
        );
        rows.push(SummaryRow {
            a,
            r,
            rho,
            method: Some(plan.kind.name().into()),
            metric: "coverage".into(),
            value: coverage,
            mc_se: Some(binomial_se(coverage, denom)),
            theory: exact.then_some(1.0 - alpha),
        });
        let mean_w = slot.width.value() / denom as f64;
        let var_w = (slot.width_sq.value() / denom as f64 - mean_w * mean_w).max(0.0);
        rows.push(SummaryRow {
            a,
            r,
            rho,
            method: Some(plan.kind.name().into()),
            metric: "mean_width".into(),
            value: mean_w,
            mc_se: Some((var_w / denom as f64).sqrt()),
            theory: None,
        });
        rows.push(SummaryRow {
            a,
            r,
            rho,
            method: Some(plan.kind.name().into()),
            metric: "width_n".into(),
            value: slot.n_width as f64,
            mc_se: None,
            theory: None,
        });
        if slot.skipped > 0 {
            rows.push(SummaryRow {
                a,
                r,
                rho,
                method: Some(plan.kind.name().into()),
                metric: "skipped_below_threshold".into(),
                value: slot.skipped as f64,
                mc_se: None,
                theory: None,
            });
        }
    }
    let p_below = acc.below_threshold as f64 / n as f64;
    rows.push(SummaryRow {
        a,
        r,
        rho,
        method: Some(ci_method.name().into()),
        metric: "pr_below_threshold".into(),
        value: p_below,
        mc_se: Some(binomial_se(p_below, n)),
        theory: None,
    });
    let p_boundary = acc.at_boundary as f64 / n as f64;
    rows.push(SummaryRow {
        a,
        r,
        rho,
        method: Some(ci_method.name().into()),
        metric: "boundary_freq".into(),
        value: p_boundary,
        mc_se: Some(binomial_se(p_boundary, n)),
        theory: prob_boundary(&truth, ci_method).ok(),
    });
    Ok(SimSummary {
        study: "coverage".into(),
        config: config.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Study 4: convergence to the limiting laws.
// ---------------------------------------------------------------------------

/// Kolmogorov–Smirnov statistic of (sorted) `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic KS critical value at the given level (0.10, 0.05, or 0.01),
/// with the Stephens small-sample correction.
pub fn ks_critical(n: usize, level: f64) -> Result<f64> {
    let k_alpha = if (level - 0.10).abs() < 1e-12 {
        1.223_848
    } else if (level - 0.05).abs() < 1e-12 {
        1.358_099
    } else if (level - 0.01).abs() < 1e-12 {
        1.627_624
    } else {
        return Err(Error::Domain(format!(
            "KS critical value tabulated for levels 0.10/0.05/0.01, got {level}"
        )));
    };
    let sn = (n as f64).sqrt();
    Ok(k_alpha / (sn + 0.12 + 0.11 / sn))
}

/// KS checks of the large-a normal law for ρ̂ and the fixed-a chi-square law
/// for σ̂²u, at the configured design point.
pub fn run_convergence_study(config: &SimConfig) -> Result<SimSummary> {
    config.validate()?;
    let truth = config.truth()?;
    if !(config.sigma2_u > 0.0) {
        return Err(Error::Config(
            "sigma2_u: the convergence laws assume a positive unit variance".into(),
        ));
    }
    let rho = truth.rho();
    let (a, r) = (config.a, config.r);
    let (af, rf) = (a as f64, r as f64);
    let beta = Method::Mle.beta(a);
    let (sd_u, sd_eps) = (config.sigma2_u.sqrt(), config.sigma2_eps.sqrt());
    let n = config.n_reps;

    #[derive(Clone, Default)]
    struct Draws {
        rho_hat: Vec<f64>,
        s2u_hat: Vec<f64>,
        boundary: u64,
    }

    let acc = chunked_reduce(
        n,
        Draws::default,
        |acc, range| {
            let mut scratch = BalancedData::new(a, r, vec![0.0; a * r]).unwrap();
            for rep in range {
                let mut stream = RngStream::new(config.master_seed, rep);
                fill_dataset(&mut scratch, sd_u, sd_eps, &mut stream);
                let t = lean_table(&scratch);
                let est = estimate(Method::Mle, &t, a, r);
                acc.rho_hat
                    .push(((t.ms_u / t.ms_eps / beta - 1.0) / rf).max(0.0));
                acc.s2u_hat.push(est.sigma2_u);
                if est.at_boundary {
                    acc.boundary += 1;
                }
            }
        },
        |x, y| {
            x.rho_hat.extend_from_slice(&y.rho_hat);
            x.s2u_hat.extend_from_slice(&y.s2u_hat);
            x.boundary += y.boundary;
        },
    );

    let sigma_rho = asymptotic_covariance(&truth)?
        .sigma2_rho
        .expect("sigma2_u > 0 checked above")
        .sqrt();
    let mut std_rho: Vec<f64> = acc
        .rho_hat
        .iter()
        .map(|rh| af.sqrt() * (rh - rho) / sigma_rho)
        .collect();
    let ks_rho = ks_statistic(&mut std_rho, normal_cdf);

    let df = (a - 1) as f64;
    let mut scaled_u: Vec<f64> = acc
        .s2u_hat
        .iter()
        .map(|s| af * s / config.sigma2_u)
        .collect();
    let ks_u = ks_statistic(&mut scaled_u, |x| {
        chi2_cdf(x.max(0.0), df).unwrap_or(f64::NAN)
    });

    let crit = ks_critical(n as usize, 0.01)?;
    let boundary_freq = acc.boundary as f64 / n as f64;
    let rows = vec![
        SummaryRow {
            a,
            r,
            rho,
            method: Some("mle".into()),
            metric: "ks_rho_vs_normal".into(),
            value: ks_rho,
            mc_se: None,
            theory: Some(crit),
        },
        SummaryRow {
            a,
            r,
            rho,
            method: Some("mle".into()),
            metric: "ks_sigma2_u_vs_chi2".into(),
            value: ks_u,
            mc_se: None,
            theory: Some(crit),
        },
        SummaryRow {
            a,
            r,
            rho,
            method: Some("mle".into()),
            metric: "boundary_freq".into(),
            value: boundary_freq,
            mc_se: Some(binomial_se(boundary_freq, n)),
            theory: prob_boundary(&truth, Method::Mle).ok(),
        },
    ];
    Ok(SimSummary {
        study: "convergence".into(),
        config: config.clone(),
        rows,
    })
}
