//! Tabulated direction profiles and the constant of a time-varying input.
//!
//! With input distribution P* + C·v̄′(w) at normalised time w, user k falls
//! behind by E_k(s) = C − I_k(P* + C v̄′(s)) + C∇I_k(v̄′(s)) per unit of s,
//! which shifts its CDF by the accumulated integral of E_k/C.

use serde::{Deserialize, Serialize};

use super::{checked_rho, mean_from_cdf};
use crate::channel::{mutual_information, ChannelAnalysis, Direction, InputDistribution, VarianceKind};
use crate::special::{cdf, ln_cdf, tail_integral};
use crate::{Error, Result};

/// Slack allowed when checking that P* + C·v̄′(w) is a distribution.
const PROB_SLACK: f64 = 1e-9;

/// A direction per abscissa on a uniform grid, with per-user CDFs and
/// stationarity residuals when it came from the converse optimisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFunction {
    pub w_grid: Vec<f64>,
    pub directions: Vec<Direction>,
    /// cdf_values[k][i] = F_k(w_grid[i]); empty for tabulated profiles.
    pub cdf_values: Vec<Vec<f64>>,
    /// Empty for tabulated profiles.
    pub stationarity_residuals: Vec<f64>,
}

impl ProfileFunction {
    /// A user-supplied profile on a uniform grid.
    pub fn tabulated(w_grid: Vec<f64>, directions: Vec<Direction>) -> Result<Self> {
        let n = w_grid.len();
        if n < 5 || directions.len() != n {
            return Err(Error::Dimension(format!("need ≥ 5 grid points with one direction each, got {n}/{}", directions.len())));
        }
        let h = (w_grid[n - 1] - w_grid[0]) / (n - 1) as f64;
        if !(h > 0.0) || w_grid.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.max(1.0)) {
            return Err(Error::InvalidParameter("profile grid must be increasing and uniform".into()));
        }
        let len = directions[0].components().len();
        if directions.iter().any(|d| d.components().len() != len) {
            return Err(Error::Dimension("profile directions differ in length".into()));
        }
        Ok(Self { w_grid, directions, cdf_values: Vec::new(), stationarity_residuals: Vec::new() })
    }

    /// The same direction at every abscissa of [−w_max, w_max].
    pub fn constant(v: Direction, w_max: f64, grid_n: usize) -> Result<Self> {
        let n = grid_n.max(2);
        let grid = (0..n).map(|i| -w_max + 2.0 * w_max * i as f64 / (n - 1) as f64).collect();
        Self::tabulated(grid, vec![v; n])
    }

    /// Central-difference derivative of the profile; one-sided at the ends.
    pub fn derivative(&self) -> Vec<Vec<f64>> {
        let n = self.w_grid.len();
        let h = (self.w_grid[n - 1] - self.w_grid[0]) / (n - 1) as f64;
        let comp = |i: usize| self.directions[i].components();
        (0..n)
            .map(|i| {
                let (a, b, span) = match i {
                    0 => (0, 1, h),
                    _ if i == n - 1 => (n - 2, n - 1, h),
                    _ => (i - 1, i + 1, 2.0 * h),
                };
                comp(b).iter().zip(comp(a)).map(|(x, y)| (x - y) / span).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiABar {
    pub value: f64,
    /// Simpson error estimate from halving the grid.
    pub quadrature_error: f64,
    /// Estimated mass outside the grid, extrapolating the edge CDFs as Gaussians.
    pub tail_estimate: f64,
    /// max_k |E_k| at the lowest abscissa, where the integral of E_k is started.
    pub lower_edge_rate: f64,
    /// cdf_values[k][i] = F_{H̄_k}(w_grid[i]).
    pub cdf_values: Vec<Vec<f64>>,
}

/// E[max_k H̄_k] for the time-varying input along `profile`.
pub fn xi_a_bar(an: &ChannelAnalysis, profile: &ProfileFunction, kind: VarianceKind) -> Result<XiABar> {
    let rho = checked_rho(an, kind)?;
    let nx = an.pstar.len();
    if profile.directions.first().map(|d| d.components().len()) != Some(nx) {
        return Err(Error::Dimension("profile directions do not match the input alphabet".into()));
    }
    let grid = &profile.w_grid;
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let c = an.capacity;
    let deriv = profile.derivative();
    let k = an.num_users();
    let mut rate = vec![vec![0.0; n]; k];
    for (i, d) in deriv.iter().enumerate() {
        let p: Vec<f64> = an.pstar.probs().iter().zip(d).map(|(p, di)| p + c * di).collect();
        if p.iter().any(|&x| !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&x)) {
            return Err(Error::InvalidParameter(format!(
                "P* + C·v̄′(w) is not a distribution at w = {:.6}",
                grid[i]
            )));
        }
        let clipped: Vec<f64> = p.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        let s: f64 = clipped.iter().sum();
        let dist = InputDistribution::new(clipped.iter().map(|x| x / s).collect())?;
        let dv = Direction::new(d.clone())?;
        for (kk, w) in an.channel.users().iter().enumerate() {
            let grad = an.directional_derivative(kk, &dv)?;
            rate[kk][i] = c - mutual_information(&dist, w)? + c * grad;
        }
    }
    let mut cdf_values = vec![vec![0.0; n]; k];
    let mut edge_args = vec![(0.0, 0.0); k];
    let mut log_prod = vec![0.0; n];
    for kk in 0..k {
        let mut acc = 0.0;
        for i in 0..n {
            if i > 0 {
                acc += 0.5 * h * (rate[kk][i - 1] + rate[kk][i]);
            }
            let v = Direction::new(profile.directions[i].components().to_vec())?;
            let u = (grid[i] + an.directional_derivative(kk, &v)? - acc / c) / rho[kk];
            cdf_values[kk][i] = cdf(u);
            log_prod[i] += ln_cdf(u);
            if i == 0 {
                edge_args[kk].0 = u;
            }
            if i == n - 1 {
                edge_args[kk].1 = u;
            }
        }
    }
    let prod: Vec<f64> = log_prod.iter().map(|x| x.exp()).collect();
    let (value, quadrature_error) = mean_from_cdf(grid, &prod);
    let upper: f64 = edge_args.iter().zip(&rho).map(|((_, hi), r)| r * tail_integral(*hi)).sum();
    let lower = edge_args
        .iter()
        .zip(&rho)
        .map(|((lo, _), r)| r * tail_integral(-*lo))
        .fold(f64::INFINITY, f64::min);
    let lower_edge_rate = rate.iter().map(|r| r[0].abs()).fold(0.0, f64::max);
    Ok(XiABar { value, quadrature_error, tail_estimate: upper + lower, lower_edge_rate, cdf_values })
}
