//! Feasibility of the time-sharing profile for two users and two input blocks.
//!
//! For the block channel the converse direction is β(w) = (v(w), −v(w)) with
//! v(w) the root of Σ_k ψ((w + vΔ_k)/ϱ_k)·Δ_k/ϱ_k = 0. The profile is a valid
//! time-varying input when the slope v′ stays between 0 and
//! D = −(Δ₁ϱ₂² + Δ₂ϱ₁²)/(Δ₁²ϱ₂² + Δ₂²ϱ₁²) and the distribution shifted by
//! C·D stays in the simplex.

use serde::{Deserialize, Serialize};

use super::checked_rho;
use crate::channel::{ChannelAnalysis, VarianceKind};
use crate::special::{psi, psi_prime};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Point {
    pub w: f64,
    pub v: f64,
    /// v′(w) from implicit differentiation of the stationarity equation.
    pub slope: f64,
    /// v′(w) from central differences of the computed v.
    pub slope_fd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma1Report {
    /// (Δ₁, Δ₂) = (C₁₁ − C₁₂, C₂₁ − C₂₂).
    pub delta: [f64; 2],
    pub rho: [f64; 2],
    pub d: f64,
    /// Δ₁/ϱ₁ + Δ₂/ϱ₂; its sign decides which side of zero v′ lies on.
    pub balance: f64,
    /// P*(x) ± C·P*_r(x)·D for every input.
    pub region_values: Vec<f64>,
    pub region_ok: bool,
    pub sign_ok: bool,
    pub vprime_ok: bool,
    pub slope_range: (f64, f64),
    /// Largest gap between implicit and finite-difference slopes.
    pub fd_mismatch: f64,
    pub points: Vec<Lemma1Point>,
}

impl Lemma1Report {
    pub fn all_ok(&self) -> bool {
        self.region_ok && self.sign_ok && self.vprime_ok
    }
}

/// D = −(Δ₁ϱ₂² + Δ₂ϱ₁²)/(Δ₁²ϱ₂² + Δ₂²ϱ₁²).
pub fn lemma1_d(delta: [f64; 2], rho: [f64; 2]) -> f64 {
    let (r1, r2) = (rho[0] * rho[0], rho[1] * rho[1]);
    -(delta[0] * r2 + delta[1] * r1) / (delta[0] * delta[0] * r2 + delta[1] * delta[1] * r1)
}

fn kappa(w: f64, v: f64, delta: [f64; 2], rho: [f64; 2]) -> (f64, f64) {
    let mut f = 0.0;
    let mut df = 0.0;
    for k in 0..2 {
        let u = (w + v * delta[k]) / rho[k];
        f += psi(u) * delta[k] / rho[k];
        df += psi_prime(u) * delta[k] * delta[k] / (rho[k] * rho[k]);
    }
    (f, df)
}

/// Root of the decreasing function v ↦ κ_w(v), by bracketed Newton.
fn solve_v(w: f64, delta: [f64; 2], rho: [f64; 2], guess: f64) -> f64 {
    let (mut lo, mut hi) = (guess - 1.0, guess + 1.0);
    while kappa(w, lo, delta, rho).0 < 0.0 {
        lo -= 2.0 * (hi - lo);
    }
    while kappa(w, hi, delta, rho).0 > 0.0 {
        hi += 2.0 * (hi - lo);
    }
    let mut v = guess.clamp(lo, hi);
    for _ in 0..200 {
        let (f, df) = kappa(w, v, delta, rho);
        if f > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let mut next = v - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() <= 1e-15 * (1.0 + v.abs()) {
            return next;
        }
        v = next;
    }
    v
}

/// v(w) and its slopes on `w_grid` (sorted, uniform spacing not required).
pub fn lemma1_profile(delta: [f64; 2], rho: [f64; 2], w_grid: &[f64]) -> Result<Vec<Lemma1Point>> {
    if !(delta[0] > 0.0 && delta[1] < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need Δ₁ > 0 > Δ₂, got Δ₁ = {}, Δ₂ = {}",
            delta[0], delta[1]
        )));
    }
    if rho.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter("ϱ must be positive".into()));
    }
    let mut vs = Vec::with_capacity(w_grid.len());
    let mut guess = 0.0;
    for &w in w_grid {
        let v = solve_v(w, delta, rho, guess);
        vs.push(v);
        guess = v;
    }
    let n = w_grid.len();
    Ok((0..n)
        .map(|i| {
            let w = w_grid[i];
            let v = vs[i];
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..2 {
                let p = psi_prime((w + v * delta[k]) / rho[k]);
                num += delta[k] / (rho[k] * rho[k]) * p;
                den += delta[k] * delta[k] / (rho[k] * rho[k]) * p;
            }
            let slope_fd = if n < 2 {
                f64::NAN
            } else {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (vs[b] - vs[a]) / (w_grid[b] - w_grid[a])
            };
            Lemma1Point { w, v, slope: -num / den, slope_fd }
        })
        .collect())
}

/// Runs every Lemma 1 check on a two-user channel with input blocks {0, 1} and {2, 3}.
pub fn lemma1_check(an: &ChannelAnalysis, kind: VarianceKind, w_max: f64, grid_n: usize) -> Result<Lemma1Report> {
    if an.num_users() != 2 || an.pstar.len() != 4 {
        return Err(Error::Scope("the lemma covers two users over two input blocks of size two".into()));
    }
    let p = an.pstar.probs();
    let alpha = [p[0] + p[1], p[2] + p[3]];
    if alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Scope("an input block has zero probability".into()));
    }
    let within = |x: usize| p[x] / alpha[x / 2];
    let block_cap = |k: usize, r: usize| {
        let d = &an.users[k].divergences;
        within(2 * r) * d[2 * r] + within(2 * r + 1) * d[2 * r + 1]
    };
    let delta = [block_cap(0, 0) - block_cap(0, 1), block_cap(1, 0) - block_cap(1, 1)];
    if !(delta[0] > 0.0 && delta[1] < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "user order violates Δ₁ > 0 > Δ₂ (Δ₁ = {:.6}, Δ₂ = {:.6})",
            delta[0], delta[1]
        )));
    }
    let r = checked_rho(an, kind)?;
    let rho = [r[0], r[1]];
    let d = lemma1_d(delta, rho);
    let c = an.capacity;
    let region_values: Vec<f64> = (0..4)
        .map(|x| {
            let sign = if x < 2 { 1.0 } else { -1.0 };
            p[x] + sign * c * within(x) * d
        })
        .collect();
    let region_ok = region_values.iter().all(|v| (0.0..=1.0).contains(v));
    let balance = delta[0] / rho[0] + delta[1] / rho[1];
    let sign_ok = balance * (rho[1] - rho[0]) >= 0.0;
    let n = grid_n.max(3);
    let grid: Vec<f64> = (0..n).map(|i| -w_max + 2.0 * w_max * i as f64 / (n - 1) as f64).collect();
    let points = lemma1_profile(delta, rho, &grid)?;
    let slopes = points.iter().map(|q| q.slope);
    let slope_range = slopes.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s), b.max(s)));
    let strictly_between = |s: f64| {
        if balance > 0.0 {
            d < s && s < 0.0
        } else if balance < 0.0 {
            0.0 < s && s < d
        } else {
            (s - d).abs() <= 1e-9
        }
    };
    let vprime_ok = points.iter().all(|q| strictly_between(q.slope) && strictly_between(q.slope_fd));
    let fd_mismatch = points.iter().map(|q| (q.slope - q.slope_fd).abs()).fold(0.0, f64::max);
    Ok(Lemma1Report {
        delta,
        rho,
        d,
        balance,
        region_values,
        region_ok,
        sign_ok,
        vprime_ok,
        slope_range,
        fd_mismatch,
        points,
    })
}
