//! Second-order constants and the normal approximation.
//!
//! Both constants are expectations of a maximum of K independent variables.
//! For the achievability constant they are Gaussians whose means are shifted
//! along the best fixed zero-sum direction; for the converse constant the
//! direction is re-optimised for every abscissa w, giving the CDFs
//! F_k(w) = Φ((w + ∇I_k(v̂(w)))/ϱ_k). A time-varying input profile gives a
//! third constant that interpolates between the two.
//!
//! ϱ_k normalises each user's variance by the geometric mean; which variance
//! (conditional or unconditional) is selected by [`VarianceKind`].

mod lemma;
mod profile;
mod subspace;
mod xi;

use serde::{Deserialize, Serialize};

pub use lemma::{lemma1_check, lemma1_d, lemma1_profile, Lemma1Point, Lemma1Report};
pub use profile::{xi_a_bar, ProfileFunction, XiABar};
pub use xi::{hatv, xi_a, xi_c, xi_c_cached, HatV, XiA, XiC};

pub use crate::channel::VarianceKind;
pub use crate::special::{psi, psi_inv, psi_prime, psi_second};

use crate::cache::Cache;
use crate::channel::ChannelAnalysis;
use crate::quad::integrate;
use crate::special::{ln_cdf, pdf, tail_integral};
use crate::{Error, Result};

/// Half-width, in standard deviations, of the quadrature window for Gaussian maxima.
const GAUSS_WINDOW: f64 = 10.0;

/// Numerical settings shared by the constant computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSettings {
    pub variance: VarianceKind,
    /// Profiles are tabulated on [−w_max, w_max].
    pub w_max: f64,
    pub grid_n: usize,
    /// Nelder–Mead starts for the achievability constant.
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for AsymptoticSettings {
    fn default() -> Self {
        Self { variance: VarianceKind::default(), w_max: 12.0, grid_n: 2048, multistarts: 8, seed: 0x5eed }
    }
}

/// Which sufficient condition makes the two constants coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EqualityCase {
    /// P* maximises every user's mutual information.
    SharedCaid,
    /// Equal variances and Σ_k ∇I_k vanishes along every projected unit vector.
    Balanced,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondOrderConstants {
    pub variance: VarianceKind,
    /// Geometric mean of the selected variances.
    pub v: f64,
    pub rho: Vec<f64>,
    pub xi_a: XiA,
    pub xi_c: XiC,
    /// Constant of the time-varying profile v̄ = v̂; `None` when the profile is infeasible.
    pub xi_a_bar: Option<XiABar>,
    pub xi_a_bar_note: Option<String>,
    /// E[max_k Z_k] for K i.i.d. standard normals.
    pub emax_gauss: f64,
    pub equality_case: EqualityCase,
}

fn check_gaussians(means: &[f64], sds: &[f64]) -> Result<()> {
    if means.is_empty() || means.len() != sds.len() {
        return Err(Error::Dimension(format!("{} means and {} standard deviations", means.len(), sds.len())));
    }
    if means.iter().any(|m| !m.is_finite()) || sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter("means must be finite and standard deviations positive".into()));
    }
    Ok(())
}

/// ln ∏_k Φ((x − μ_k)/σ_k).
fn ln_prod_cdf(x: f64, means: &[f64], sds: &[f64]) -> f64 {
    means.iter().zip(sds).map(|(m, s)| ln_cdf((x - m) / s)).sum()
}

/// E[max_k X_k] for independent X_k ~ N(μ_k, σ_k²) with a certified bound on
/// the truncation and quadrature error.
pub fn emax_gaussians_certified(means: &[f64], sds: &[f64]) -> Result<(f64, f64)> {
    check_gaussians(means, sds)?;
    let (top, a) = means.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
    let smax = sds.iter().copied().fold(0.0, f64::max);
    let hi = a + GAUSS_WINDOW * smax;
    let lo = a - GAUSS_WINDOW * sds[top];
    let (upper, e1) = integrate(|x| -ln_prod_cdf(x, means, sds).exp_m1(), a, hi, 1e-14);
    let (lower, e2) = integrate(|x| ln_prod_cdf(x, means, sds).exp(), lo, a, 1e-14);
    // 1 − ∏Φ_k ≤ Σ_k (1 − Φ_k) above the window; ∏Φ_k ≤ Φ_top below it.
    let upper_tail: f64 = means.iter().zip(sds).map(|(m, s)| s * tail_integral((hi - m) / s)).sum();
    let lower_tail = sds[top] * tail_integral(GAUSS_WINDOW);
    Ok((a + upper - lower, e1 + e2 + upper_tail + lower_tail))
}

/// E[max_k X_k] for independent X_k ~ N(μ_k, σ_k²).
pub fn emax_gaussians(means: &[f64], sds: &[f64]) -> Result<f64> {
    emax_gaussians_certified(means, sds).map(|r| r.0)
}

/// P[X_k is the maximum] for each k; the gradient of [`emax_gaussians`] in the means.
pub fn max_attainment_probs(means: &[f64], sds: &[f64]) -> Result<Vec<f64>> {
    check_gaussians(means, sds)?;
    let smax = sds.iter().copied().fold(0.0, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min) - GAUSS_WINDOW * smax;
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GAUSS_WINDOW * smax;
    Ok((0..means.len())
        .map(|k| {
            let f = |x: f64| {
                let u = (x - means[k]) / sds[k];
                let others: f64 = (0..means.len())
                    .filter(|&j| j != k)
                    .map(|j| ln_cdf((x - means[j]) / sds[j]))
                    .sum();
                pdf(u) / sds[k] * others.exp()
            };
            integrate(f, lo, hi, 1e-13).0
        })
        .collect())
}

/// Classifies the channel by the equality conditions between the two constants.
pub fn check_corollary4(an: &ChannelAnalysis, kind: VarianceKind) -> Result<EqualityCase> {
    let rows = subspace::projected_divergences(an)?;
    let tol = subspace::KERNEL_TOL;
    if rows.iter().all(|r| r.iter().all(|d| d.abs() <= tol)) {
        return Ok(EqualityCase::SharedCaid);
    }
    let vars = an.variances(kind);
    let equal_vars = vars.iter().all(|v| (v - vars[0]).abs() <= tol * vars[0].abs().max(1.0));
    let balanced = (0..an.pstar.len()).all(|i| rows.iter().map(|r| r[i]).sum::<f64>().abs() <= tol);
    Ok(if equal_vars && balanced { EqualityCase::Balanced } else { EqualityCase::None })
}

/// Cℓ/(1 − ε) − √(Vℓ/(1 − ε))·Ξ.
pub fn normal_approx_value(capacity: f64, v: f64, xi: f64, eps: f64, ell: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidParameter(format!("blocklength must be positive, got {ell}")));
    }
    let s = 1.0 - eps;
    Ok(capacity * ell / s - (v * ell / s).sqrt() * xi)
}

/// Normal approximation of log M built on the converse constant.
pub fn normal_approx(an: &ChannelAnalysis, consts: &SecondOrderConstants, eps: f64, ell: f64) -> Result<f64> {
    normal_approx_value(an.capacity, consts.v, consts.xi_c.value, eps, ell)
}

/// The asymptotic band: (with Ξ_a, with Ξ_c).
pub fn normal_approx_band(an: &ChannelAnalysis, consts: &SecondOrderConstants, eps: f64, ell: f64) -> Result<(f64, f64)> {
    Ok((
        normal_approx_value(an.capacity, consts.v, consts.xi_a.value, eps, ell)?,
        normal_approx_value(an.capacity, consts.v, consts.xi_c.value, eps, ell)?,
    ))
}

/// Positive ϱ_k for the selected variance, or a scope error.
pub(crate) fn checked_rho(an: &ChannelAnalysis, kind: VarianceKind) -> Result<Vec<f64>> {
    let rho = an.rho(kind);
    if rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Scope("second-order constants need every variance to be positive".into()));
    }
    Ok(rho)
}

/// Computes every constant with the given settings.
pub fn second_order_constants(an: &ChannelAnalysis, settings: &AsymptoticSettings) -> Result<SecondOrderConstants> {
    second_order_constants_cached(an, settings, None)
}

/// [`second_order_constants`] with the converse profile cached.
pub fn second_order_constants_cached(
    an: &ChannelAnalysis,
    settings: &AsymptoticSettings,
    cache: Option<&Cache>,
) -> Result<SecondOrderConstants> {
    let rho = checked_rho(an, settings.variance)?;
    let xa = xi_a(an, settings)?;
    let xc = xi_c_cached(an, settings, cache)?;
    let (xi_a_bar, xi_a_bar_note) = match xi_a_bar(an, &xc.profile, settings.variance) {
        Ok(x) => (Some(x), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let k = an.num_users();
    Ok(SecondOrderConstants {
        variance: settings.variance,
        v: an.geomean(settings.variance),
        rho,
        xi_a: xa,
        xi_c: xc,
        xi_a_bar,
        xi_a_bar_note,
        emax_gauss: emax_gaussians(&vec![0.0; k], &vec![1.0; k])?,
        equality_case: check_corollary4(an, settings.variance)?,
    })
}

/// ln Φ((w + g_k)/ϱ_k) summed over users, with the per-user arguments.
pub(crate) fn log_objective(w: f64, grads: &[f64], rho: &[f64]) -> (f64, Vec<f64>) {
    let u: Vec<f64> = grads.iter().zip(rho).map(|(g, r)| (w + g) / r).collect();
    (u.iter().map(|&x| ln_cdf(x)).sum(), u)
}

/// b − ∫_a^b G for a sampled CDF G on a uniform grid, and a Richardson-style
/// error estimate comparing Simpson at spacings h and 2h.
pub(crate) fn mean_from_cdf(grid: &[f64], g: &[f64]) -> (f64, f64) {
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let fine = crate::quad::simpson(g, h);
    let last_even = if (n - 1) % 2 == 0 { n - 1 } else { n - 2 };
    let fine_part = crate::quad::simpson(&g[..=last_even], h);
    let coarse: Vec<f64> = g[..=last_even].iter().step_by(2).copied().collect();
    let coarse_part = crate::quad::simpson(&coarse, 2.0 * h);
    (grid[n - 1] - fine, (fine_part - coarse_part).abs() / 15.0)
}

#[cfg(test)]
mod tests;
