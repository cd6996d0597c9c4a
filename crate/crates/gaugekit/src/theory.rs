//! Exact finite-sample moments, boundary probabilities, and asymptotic
//! covariances for the one-way variance-component estimators.
//!
//! The ANOVA plug-in ratio has closed-form mean, bias, and variance. The
//! truncated (maximum likelihood / non-negative) estimators do not: their
//! ratio moments come from truncated-F quadrature, and their
//! variance-component moments from conditional chi-square expectations over
//! the boundary constraint region, reduced to one-dimensional quadrature
//! against an incomplete-gamma tail factor. A seeded Monte Carlo fallback
//! covers the (rare) case where the quadrature does not converge.

use crate::dist::quadrature::integrate_segments;
use crate::dist::special::reg_inc_gamma_pair;
use crate::dist::{chi2_pdf, f_cdf, f_trunc_moment, RngStream};
use crate::error::{Error, Result};
use crate::estimators::Method;
use serde::{Deserialize, Serialize};

/// The true model configuration a theory quantity is evaluated at.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelTruth {
    pub a: usize,
    pub r: usize,
    pub sigma2_u: f64,
    pub sigma2_eps: f64,
}

impl ModelTruth {
    pub fn new(a: usize, r: usize, sigma2_u: f64, sigma2_eps: f64) -> Result<Self> {
        if a < 2 || r < 2 {
            return Err(Error::Domain(format!(
                "model requires a >= 2 and r >= 2, got a={a}, r={r}"
            )));
        }
        if !(sigma2_u >= 0.0) || !(sigma2_eps > 0.0) {
            return Err(Error::Domain(format!(
                "model requires sigma2_u >= 0 and sigma2_eps > 0, got ({sigma2_u}, {sigma2_eps})"
            )));
        }
        Ok(ModelTruth {
            a,
            r,
            sigma2_u,
            sigma2_eps,
        })
    }

    pub fn from_rho(a: usize, r: usize, rho: f64) -> Result<Self> {
        Self::new(a, r, rho, 1.0)
    }

    pub fn rho(&self) -> f64 {
        self.sigma2_u / self.sigma2_eps
    }

    pub fn sigma2_t(&self) -> f64 {
        self.sigma2_u + self.sigma2_eps
    }

    pub fn df_u(&self) -> f64 {
        (self.a - 1) as f64
    }

    pub fn df_eps(&self) -> f64 {
        (self.a * (self.r - 1)) as f64
    }

    fn lambda(&self) -> f64 {
        1.0 + self.r as f64 * self.rho()
    }
}

/// Pr(MSu < MSε): the chance the ANOVA unit-variance estimate goes negative.
pub fn prob_negative_anova(truth: &ModelTruth) -> Result<f64> {
    f_cdf(1.0 / truth.lambda(), truth.df_u(), truth.df_eps())
}

/// Pr(MSu/MSε < β): the chance a truncated method lands on the boundary
/// σ̂²u = 0. β is a/(a−1) for maximum likelihood and 1 for non-negative
/// ANOVA (where the event coincides with a negative ANOVA estimate).
pub fn prob_boundary(truth: &ModelTruth, method: Method) -> Result<f64> {
    let beta = boundary_beta(truth.a, method)?;
    f_cdf(beta / truth.lambda(), truth.df_u(), truth.df_eps())
}

fn boundary_beta(a: usize, method: Method) -> Result<f64> {
    match method {
        Method::Mle | Method::Nanova => Ok(method.beta(a)),
        Method::Anova => Err(Error::Domain(
            "boundary probability applies to the truncated methods only".into(),
        )),
    }
}

/// E[ρ̂_ANOVA] = (ρ·dfε + 2/r)/(dfε − 2); requires dfε > 2.
pub fn mean_rho_anova(truth: &ModelTruth) -> Result<f64> {
    let df_eps = truth.df_eps();
    if df_eps <= 2.0 {
        return Err(Error::MomentUndefined(format!(
            "E[rho_ANOVA] requires a(r-1) > 2, got {df_eps}"
        )));
    }
    Ok((truth.rho() * df_eps + 2.0 / truth.r as f64) / (df_eps - 2.0))
}

/// Bias of the ANOVA plug-in ratio, 2(1+rρ)/(r(dfε − 2)); always positive.
pub fn bias_rho_anova(truth: &ModelTruth) -> Result<f64> {
    let df_eps = truth.df_eps();
    if df_eps <= 2.0 {
        return Err(Error::MomentUndefined(format!(
            "bias of rho_ANOVA requires a(r-1) > 2, got {df_eps}"
        )));
    }
    Ok(2.0 * truth.lambda() / (truth.r as f64 * (df_eps - 2.0)))
}

/// Var[ρ̂_ANOVA] = 2(1+rρ)²·dfε²·(dfε + dfu − 2) / (r²·dfu·(dfε−2)²·(dfε−4));
/// requires dfε > 4.
pub fn var_rho_anova(truth: &ModelTruth) -> Result<f64> {
    let (df_u, df_eps) = (truth.df_u(), truth.df_eps());
    if df_eps <= 4.0 {
        return Err(Error::MomentUndefined(format!(
            "Var[rho_ANOVA] requires a(r-1) > 4, got {df_eps}"
        )));
    }
    let lam = truth.lambda();
    let r2 = (truth.r as f64).powi(2);
    Ok(2.0 * lam * lam * df_eps * df_eps * (df_eps + df_u - 2.0)
        / (r2 * df_u * (df_eps - 2.0).powi(2) * (df_eps - 4.0)))
}

/// Mean of a truncated ratio estimator (g·F − 1)/r restricted to F ≥ c,
/// zero elsewhere. Exposed for the theory cross-checks.
pub(crate) fn rho_trunc_mean(df_u: f64, df_eps: f64, r: f64, g: f64, c: f64) -> Result<f64> {
    let p_keep = crate::dist::f_sf(c, df_u, df_eps)?;
    let m1 = f_trunc_moment(1, df_u, df_eps, c)?;
    Ok(p_keep / r * (g * m1 - 1.0))
}

/// Second raw moment of the same truncated ratio estimator.
pub(crate) fn rho_trunc_second(df_u: f64, df_eps: f64, r: f64, g: f64, c: f64) -> Result<f64> {
    let p_keep = crate::dist::f_sf(c, df_u, df_eps)?;
    let m1 = f_trunc_moment(1, df_u, df_eps, c)?;
    let m2 = f_trunc_moment(2, df_u, df_eps, c)?;
    Ok(p_keep / (r * r) * (g * g * m2 - 2.0 * g * m1 + 1.0))
}

/// E[ρ̂] for the maximum likelihood or non-negative ANOVA estimator,
/// via truncated-F quadrature. Requires dfε > 2.
pub fn mean_rho_truncated(truth: &ModelTruth, method: Method) -> Result<f64> {
    let beta = boundary_beta(truth.a, method)?;
    let lam = truth.lambda();
    rho_trunc_mean(
        truth.df_u(),
        truth.df_eps(),
        truth.r as f64,
        lam / beta,
        beta / lam,
    )
}

/// Var[ρ̂] for the truncated estimators. Requires dfε > 4.
pub fn var_rho_truncated(truth: &ModelTruth, method: Method) -> Result<f64> {
    let beta = boundary_beta(truth.a, method)?;
    let lam = truth.lambda();
    let (df_u, df_eps, r) = (truth.df_u(), truth.df_eps(), truth.r as f64);
    let mean = rho_trunc_mean(df_u, df_eps, r, lam / beta, beta / lam)?;
    let second = rho_trunc_second(df_u, df_eps, r, lam / beta, beta / lam)?;
    Ok(second - mean * mean)
}

/// A bias or dispersion figure, relative to ρ when ρ > 0 and absolute
/// (flagged) when ρ = 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RelativeMetric {
    pub value: f64,
    pub is_relative: bool,
}

/// Percent relative bias (E[ρ̂]/ρ − 1)·100, or the absolute bias when ρ = 0.
pub fn relative_bias_rho(truth: &ModelTruth, method: Method) -> Result<RelativeMetric> {
    let mean = match method {
        Method::Anova => mean_rho_anova(truth)?,
        Method::Mle | Method::Nanova => mean_rho_truncated(truth, method)?,
    };
    let rho = truth.rho();
    Ok(if rho > 0.0 {
        RelativeMetric {
            value: (mean / rho - 1.0) * 100.0,
            is_relative: true,
        }
    } else {
        RelativeMetric {
            value: mean,
            is_relative: false,
        }
    })
}

/// Percent relative standard error √Var[ρ̂]/ρ·100, or the absolute standard
/// deviation when ρ = 0.
pub fn relative_se_rho(truth: &ModelTruth, method: Method) -> Result<RelativeMetric> {
    let var = match method {
        Method::Anova => var_rho_anova(truth)?,
        Method::Mle | Method::Nanova => var_rho_truncated(truth, method)?,
    };
    let rho = truth.rho();
    Ok(if rho > 0.0 {
        RelativeMetric {
            value: var.sqrt() / rho * 100.0,
            is_relative: true,
        }
    } else {
        RelativeMetric {
            value: var.sqrt(),
            is_relative: false,
        }
    })
}

/// Sampling variances of the ANOVA variance-component estimators.
pub fn var_vc_anova(truth: &ModelTruth) -> (f64, f64) {
    let (a, r) = (truth.a as f64, truth.r as f64);
    let e4 = truth.sigma2_eps * truth.sigma2_eps;
    let ems_u = truth.sigma2_eps + r * truth.sigma2_u;
    let var_u = 2.0 / (r * r) * (ems_u * ems_u / (a - 1.0) + e4 / (a * (r - 1.0)));
    let var_eps = 2.0 * e4 / (a * (r - 1.0));
    (var_u, var_eps)
}

/// How the conditional variance-component moments were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EvalRoute {
    Quadrature,
    /// Quadrature failed to converge; values are Monte Carlo estimates with
    /// the given standard errors on (mean_u, mean_eps, var_u, var_eps).
    MonteCarlo { se: [f64; 4] },
}

/// Means and variances of σ̂²u and σ̂²ε for a truncated estimation method.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VcMoments {
    pub mean_u: f64,
    pub mean_eps: f64,
    pub var_u: f64,
    pub var_eps: f64,
    pub route: EvalRoute,
}

/// Conditional moments of the truncated variance-component estimators.
pub fn moments_vc_truncated(truth: &ModelTruth, method: Method) -> Result<VcMoments> {
    let beta = boundary_beta(truth.a, method)?;
    moments_vc_core(truth, beta, beta)
}

/// Scaled chi-square representation: X = SSu/E[MSu] ~ χ²(a−1) and
/// Y = SSε/σ²ε ~ χ²(a(r−1)) independent, with the boundary event
/// MSu/MSε < β_region. `beta_est` scales MSu inside the estimator; passing
/// `beta_region = 0` removes the truncation entirely, which reproduces the
/// unconditional ANOVA moments (the machinery's sanity anchor).
pub(crate) fn moments_vc_core(
    truth: &ModelTruth,
    beta_region: f64,
    beta_est: f64,
) -> Result<VcMoments> {
    let m = truth.df_u();
    let n = truth.df_eps();
    let (a, r) = (truth.a as f64, truth.r as f64);
    let s2e = truth.sigma2_eps;
    let lam = truth.lambda();
    let kappa = beta_region * m / (lam * n);

    let cu = s2e * lam / (r * beta_est * m);
    let ce = s2e / (r * n);
    let de = s2e / n;
    let sx = s2e * lam / (a * r);
    let sy = s2e / (a * r);

    let g = match region_moments(m, n, kappa) {
        Ok(g) => g,
        Err(Error::NonConvergence(_)) => {
            // Error-estimated Monte Carlo fallback over the same scaled
            // chi-square representation.
            return moments_vc_mc(truth, beta_region, beta_est, 10_000_000, 0x9e37);
        }
        Err(e) => return Err(e),
    };

    let mean_u = cu * g.g10 - ce * g.g01;
    let e2_u = cu * cu * g.g20 - 2.0 * cu * ce * g.g11 + ce * ce * g.g02;

    let c10 = m - g.g10;
    let c01 = n - g.g01;
    let c20 = m * (m + 2.0) - g.g20;
    let c11 = m * n - g.g11;
    let c02 = n * (n + 2.0) - g.g02;
    let mean_eps = de * g.g01 + sx * c10 + sy * c01;
    let e2_eps = de * de * g.g02 + sx * sx * c20 + 2.0 * sx * sy * c11 + sy * sy * c02;

    Ok(VcMoments {
        mean_u,
        mean_eps,
        var_u: e2_u - mean_u * mean_u,
        var_eps: e2_eps - mean_eps * mean_eps,
        route: EvalRoute::Quadrature,
    })
}

struct RegionMoments {
    g10: f64,
    g01: f64,
    g20: f64,
    g11: f64,
    g02: f64,
}

/// E[Xⁱ Yʲ 1{X ≥ κY}] for independent X ~ χ²(m), Y ~ χ²(n).
///
/// The X-integral has the closed form E[Xⁱ]·Q(m/2 + i, κy/2), leaving a
/// single integral of a tilted chi-square density (df n + 2j) against that
/// incomplete-gamma tail.
fn region_moment(m: f64, n: f64, kappa: f64, i: u32, j: u32) -> Result<f64> {
    let ex_i = chi2_raw_moment(m, i);
    let ey_j = chi2_raw_moment(n, j);
    if kappa == 0.0 {
        return Ok(ex_i * ey_j);
    }
    let n_tilt = n + 2.0 * f64::from(j);
    let shape = 0.5 * m + f64::from(i);

    // Panels across the tilted chi-square mass.
    let sd = (2.0 * n_tilt).sqrt();
    let y_max = n_tilt + 50.0 * sd + 100.0;
    let mut pts = vec![0.0];
    for k in [-16.0f64, -8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0, 16.0] {
        let y = n_tilt + k * sd;
        if y > 0.0 && y < y_max {
            pts.push(y);
        }
    }
    pts.push(y_max);

    let integrand = |y: f64| {
        if y <= 0.0 {
            return if n_tilt == 2.0 { 0.5 } else { 0.0 };
        }
        let q = reg_inc_gamma_pair(shape, 0.5 * kappa * y)
            .map(|(_, q)| q)
            .unwrap_or(f64::NAN);
        chi2_pdf(y, n_tilt) * q
    };
    let quad = integrate_segments(integrand, &pts, 1e-14, 1e-9)?;
    Ok(ex_i * ey_j * quad.value)
}

fn region_moments(m: f64, n: f64, kappa: f64) -> Result<RegionMoments> {
    Ok(RegionMoments {
        g10: region_moment(m, n, kappa, 1, 0)?,
        g01: region_moment(m, n, kappa, 0, 1)?,
        g20: region_moment(m, n, kappa, 2, 0)?,
        g11: region_moment(m, n, kappa, 1, 1)?,
        g02: region_moment(m, n, kappa, 0, 2)?,
    })
}

/// E[Xᵏ] = m(m+2)…(m+2(k−1)) for X ~ χ²(m).
fn chi2_raw_moment(m: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * (m + 2.0 * f64::from(t)))
}

fn moments_vc_mc(
    truth: &ModelTruth,
    beta_region: f64,
    beta_est: f64,
    n_reps: u64,
    seed: u64,
) -> Result<VcMoments> {
    let m = truth.a - 1;
    let n = truth.a * (truth.r - 1);
    let (a, r) = (truth.a as f64, truth.r as f64);
    let s2e = truth.sigma2_eps;
    let lam = truth.lambda();

    let mut sums = [0.0f64; 4]; // u, u², eps, eps²
    let mut stream = RngStream::new(seed, 0);
    for _ in 0..n_reps {
        let x: f64 = (0..m).map(|_| stream.standard_normal().powi(2)).sum();
        let y: f64 = (0..n).map(|_| stream.standard_normal().powi(2)).sum();
        let ms_u = s2e * lam * x / m as f64;
        let ms_e = s2e * y / n as f64;
        let (su, se) = if ms_u >= beta_region * ms_e {
            ((ms_u / beta_est - ms_e) / r, ms_e)
        } else {
            (0.0, (s2e * lam * x + s2e * y) / (a * r))
        };
        sums[0] += su;
        sums[1] += su * su;
        sums[2] += se;
        sums[3] += se * se;
    }
    let nf = n_reps as f64;
    let mean_u = sums[0] / nf;
    let mean_eps = sums[2] / nf;
    let var_u = sums[1] / nf - mean_u * mean_u;
    let var_eps = sums[3] / nf - mean_eps * mean_eps;
    let se = [
        (var_u / nf).sqrt(),
        (var_eps / nf).sqrt(),
        var_u * (2.0 / nf).sqrt(),
        var_eps * (2.0 / nf).sqrt(),
    ];
    Ok(VcMoments {
        mean_u,
        mean_eps,
        var_u,
        var_eps,
        route: EvalRoute::MonteCarlo { se },
    })
}

/// Asymptotic covariance structure of the maximum likelihood estimators as
/// the number of units grows with replicates fixed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AsymptoticCovariance {
    /// Limit variance of √a(σ̂²ε − σ²ε).
    pub sigma11: f64,
    /// Limit covariance of the pair; negative for every r ≥ 2.
    pub sigma12: f64,
    /// Limit variance of √a(σ̂²u − σ²u).
    pub sigma22: f64,
    /// Limit variance of √a(ρ̂ − ρ); requires σ²u > 0.
    pub sigma2_rho: Option<f64>,
}

/// Evaluate the large-a covariance constants at the given truth.
pub fn asymptotic_covariance(truth: &ModelTruth) -> Result<AsymptoticCovariance> {
    let r = truth.r as f64;
    if truth.r < 2 {
        return Err(Error::Domain("asymptotic covariance requires r >= 2".into()));
    }
    let e4 = truth.sigma2_eps * truth.sigma2_eps;
    let sigma11 = 2.0 * e4 / (r - 1.0);
    let sigma12 = -2.0 * e4 / (r * (r - 1.0));
    let s = truth.sigma2_u + truth.sigma2_eps / r;
    let sigma22 = 2.0 * s * s + 2.0 * e4 / (r * r * (r - 1.0));
    let sigma2_rho = if truth.sigma2_u > 0.0 {
        let lam = truth.lambda();
        Some(2.0 / (r * r) * (lam * lam + 1.0 / (r - 1.0)))
    } else {
        None
    };
    Ok(AsymptoticCovariance {
        sigma11,
        sigma12,
        sigma22,
        sigma2_rho,
    })
}

/// Plug-in σ̂₂₂ used by the Wald and log confidence intervals.
pub fn sigma22_plugin(sigma2_u: f64, sigma2_eps: f64, r: usize) -> f64 {
    let r = r as f64;
    let s = sigma2_u + sigma2_eps / r;
    2.0 * s * s + 2.0 * sigma2_eps * sigma2_eps / (r * r * (r - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn truth(a: usize, r: usize, rho: f64) -> ModelTruth {
        ModelTruth::from_rho(a, r, rho).unwrap()
    }

    #[test]
    fn negative_probability_vanishes_for_huge_rho() {
        let p = prob_negative_anova(&truth(5, 2, 1e6)).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn negative_probability_at_rho_zero_matches_f_cdf_oracle() {
        // a=5, r=2: Pr(F(4,5) < 1), adaptive Simpson on the density.
        let p = prob_negative_anova(&truth(5, 2, 0.0)).unwrap();
        let mut acc = 0.0;
        let steps = 400_000;
        let h = 1.0 / steps as f64;
        for i in 0..steps {
            let x0 = i as f64 * h;
            acc += h / 6.0
                * (crate::dist::f_pdf(x0, 4.0, 5.0)
                    + 4.0 * crate::dist::f_pdf(x0 + 0.5 * h, 4.0, 5.0)
                    + crate::dist::f_pdf(x0 + h, 4.0, 5.0));
        }
        assert_abs_diff_eq!(p, acc, epsilon = 1e-8);
    }

    #[test]
    fn negative_probability_decreases_with_more_measurements() {
        // All 12 plans, fixed rho: larger N gives smaller probability.
        let rho = 2.0;
        let mut plans: Vec<(usize, usize)> = vec![];
        for &a in &[5, 10, 20, 30] {
            for &r in &[2, 3, 6] {
                plans.push((a, r));
            }
        }
        plans.sort_by_key(|&(a, r)| a * r);
        let probs: Vec<f64> = plans
            .iter()
            .map(|&(a, r)| prob_negative_anova(&truth(a, r, rho)).unwrap())
            .collect();
        for w in probs.windows(2) {
            assert!(w[1] <= w[0] * 1.5, "not broadly decreasing: {probs:?}");
        }
        assert!(probs.last().unwrap() < &probs[0]);
    }

    #[test]
    fn boundary_probability_relations() {
        let t = truth(10, 3, 2.0);
        let nanova = prob_boundary(&t, Method::Nanova).unwrap();
        let mle = prob_boundary(&t, Method::Mle).unwrap();
        assert_eq!(nanova, prob_negative_anova(&t).unwrap());
        assert!(mle >= nanova);
        assert!(prob_boundary(&t, Method::Anova).is_err());
    }

    #[test]
    fn boundary_probability_monotone_in_rho() {
        let mut prev = 1.0;
        for &rho in &[0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
            let p = prob_boundary(&truth(10, 3, rho), Method::Mle).unwrap();
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn anova_rho_moments_worked_example() {
        // a=10, r=3, rho=2: dfε=20, E=(40 + 2/3)/18, bias=14/54, var as quoted.
        let t = truth(10, 3, 2.0);
        let mean = mean_rho_anova(&t).unwrap();
        let bias = bias_rho_anova(&t).unwrap();
        let var = var_rho_anova(&t).unwrap();
        assert_relative_eq!(mean, (40.0 + 2.0 / 3.0) / 18.0, max_relative = 1e-14);
        assert_relative_eq!(bias, 14.0 / 54.0, max_relative = 1e-14);
        assert_relative_eq!(mean - 2.0, bias, max_relative = 1e-12);
        assert_relative_eq!(var, 1_058_400.0 / 419_904.0, max_relative = 1e-12);
        // relative bias ≈ 12.96%
        let rb = relative_bias_rho(&t, Method::Anova).unwrap();
        assert!(rb.is_relative);
        assert_abs_diff_eq!(rb.value, 12.962_962, epsilon = 1e-4);
    }

    #[test]
    fn anova_bias_positive_and_vanishing() {
        for &a in &[5, 10, 20, 30] {
            for &r in &[2, 3, 6] {
                for &rho in &[1.0, 5.0, 50.0] {
                    if (a * (r - 1)) as f64 > 2.0 {
                        assert!(bias_rho_anova(&truth(a, r, rho)).unwrap() > 0.0);
                    }
                }
            }
        }
        let b_small = bias_rho_anova(&truth(10, 3, 2.0)).unwrap();
        let b_large = bias_rho_anova(&truth(10_000, 3, 2.0)).unwrap();
        assert!(b_large < b_small / 100.0);
    }

    #[test]
    fn var_rho_anova_equals_f_variance_route() {
        // ((1+r rho)/r)² Var[F] must equal the closed form.
        let t = truth(10, 3, 2.0);
        let lam = 7.0 / 3.0;
        let alt = lam * lam * crate::dist::f_variance(9.0, 20.0).unwrap();
        assert_relative_eq!(var_rho_anova(&t).unwrap(), alt, max_relative = 1e-12);
    }

    #[test]
    fn moment_existence_guards() {
        // a=2, r=2: dfε = 2.
        assert!(mean_rho_anova(&truth(2, 2, 1.0)).is_err());
        assert!(var_rho_anova(&truth(2, 3, 1.0)).is_err());
        assert!(var_rho_truncated(&truth(2, 3, 1.0), Method::Mle).is_err());
    }

    #[test]
    fn truncated_mean_with_unit_g_and_no_truncation_matches_anova() {
        // Force c = 0 and β = 1: the raw-moment core must reproduce the
        // closed-form ANOVA mean.
        let t = truth(10, 3, 2.0);
        let lam = t.lambda();
        let mean = rho_trunc_mean(9.0, 20.0, 3.0, lam, 0.0).unwrap();
        assert_relative_eq!(mean, mean_rho_anova(&t).unwrap(), max_relative = 1e-9);
    }

    #[test]
    fn nanova_mean_approaches_anova_for_large_rho() {
        let t = truth(10, 3, 60.0);
        let nanova = mean_rho_truncated(&t, Method::Nanova).unwrap();
        let anova = mean_rho_anova(&t).unwrap();
        assert_relative_eq!(nanova, anova, max_relative = 1e-6);
    }

    #[test]
    fn mle_r3_relative_bias_stays_within_two_points() {
        for &a in &[5usize, 10, 20, 30] {
            for &rho in &[1.0, 2.0, 4.0, 7.0, 10.0] {
                let rb = relative_bias_rho(&truth(a, 3, rho), Method::Mle).unwrap();
                assert!(
                    rb.value.abs() < 2.0,
                    "a={a} rho={rho}: relative bias {}",
                    rb.value
                );
            }
        }
    }

    #[test]
    fn var_vc_anova_worked_example() {
        // sigma2_u = 0, r=2, a=3: Var[σ̂²u] = (5/12)σ⁴ε.
        let t = ModelTruth::new(3, 2, 0.0, 1.3).unwrap();
        let (vu, ve) = var_vc_anova(&t);
        let e4 = 1.3f64.powi(4);
        assert_relative_eq!(vu, 5.0 / 12.0 * e4, max_relative = 1e-12);
        assert_relative_eq!(ve, 2.0 * e4 / 3.0, max_relative = 1e-12);
        // Var[σ̂²ε] halves when a(r−1) doubles.
        let t2 = ModelTruth::new(6, 2, 0.0, 1.3).unwrap();
        assert_relative_eq!(var_vc_anova(&t2).1, ve / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn vc_machinery_with_full_region_reproduces_anova_unbiasedness() {
        // beta_region = 0 removes truncation; with beta_est = 1 the
        // estimator is plain ANOVA, whose moments are closed-form.
        let t = ModelTruth::new(8, 12, 0.5, 0.5).unwrap();
        let m = moments_vc_core(&t, 0.0, 1.0).unwrap();
        assert_relative_eq!(m.mean_u, 0.5, max_relative = 1e-9);
        assert_relative_eq!(m.mean_eps, 0.5, max_relative = 1e-9);
        let (vu, ve) = var_vc_anova(&t);
        assert_relative_eq!(m.var_u, vu, max_relative = 1e-8);
        assert_relative_eq!(m.var_eps, ve, max_relative = 1e-8);
    }

    #[test]
    fn vc_moments_unconditional_limit_for_large_rho() {
        // p∘ ≈ 0: E[σ̂²u] ≈ β⁻¹(σ²ε + rσ²u)/r − σ²ε/r.
        let t = ModelTruth::new(10, 3, 50.0, 1.0).unwrap();
        let m = moments_vc_truncated(&t, Method::Mle).unwrap();
        let beta = 10.0 / 9.0;
        let want = (1.0 + 3.0 * 50.0) / (beta * 3.0) - 1.0 / 3.0;
        assert_relative_eq!(m.mean_u, want, max_relative = 1e-6);
    }

    #[test]
    fn region_moment_zero_order_matches_boundary_probability() {
        // G(0,0) with the boundary κ equals 1 − p∘ computed from the F CDF.
        let t = truth(10, 3, 2.0);
        let beta = Method::Mle.beta(10);
        let kappa = beta * t.df_u() / (t.lambda() * t.df_eps());
        let g00 = region_moment(t.df_u(), t.df_eps(), kappa, 0, 0).unwrap();
        let p0 = prob_boundary(&t, Method::Mle).unwrap();
        assert_relative_eq!(g00, 1.0 - p0, max_relative = 1e-9);
    }

    #[test]
    fn asymptotic_covariance_worked_example() {
        // σ²ε=1, σ²u=0.5, r=3.
        let t = ModelTruth::new(100, 3, 0.5, 1.0).unwrap();
        let c = asymptotic_covariance(&t).unwrap();
        assert_relative_eq!(c.sigma11, 1.0, max_relative = 1e-14);
        assert_relative_eq!(c.sigma12, -1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(c.sigma22, 1.5, max_relative = 1e-14);
        // σ²ρ at ρ=2, r=3 → 11 (needs σ²u/σ²ε = 2)
        let t2 = ModelTruth::new(100, 3, 2.0, 1.0).unwrap();
        let c2 = asymptotic_covariance(&t2).unwrap();
        assert_relative_eq!(c2.sigma2_rho.unwrap(), 11.0, max_relative = 1e-14);
        assert!(c.sigma11 > 0.0 && c.sigma22 > 0.0 && c.sigma12 < 0.0);
    }

    #[test]
    fn sigma22_limit_for_large_r() {
        // r → ∞: σ₂₂ → 2σ⁴u.
        let t = ModelTruth::new(10, 10_000, 0.7, 1.0).unwrap();
        let c = asymptotic_covariance(&t).unwrap();
        assert_relative_eq!(c.sigma22, 2.0 * 0.7f64.powi(2).powi(2) , max_relative = 1e-3);
    }
}
