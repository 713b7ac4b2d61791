//! Converse for symmetric channels with identical users.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::envelope::{envelope_at, lower_hull, step_lower_points};
use super::{golden_max, log_grid, WalkSettings};
use crate::cache::{values_or, Cache};
use crate::channel::ChannelAnalysis;
use crate::walks::{increment_law, stopping_time_cdf, Provenance, Rounding, Walk};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseSettings {
    pub walk: WalkSettings,
    /// Log-spaced η values in [eta_min, eta_max] for the initial search.
    pub eta_points: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Uniform ε-grid size for the envelope; a log-spaced half as large is added.
    pub eps_grid: usize,
    /// Bisection stops when the bracket on log M is this narrow, in nats.
    pub resolution: f64,
    /// Golden-section iterations when refining η.
    pub eta_refine_iters: usize,
}

impl Default for ConverseSettings {
    fn default() -> Self {
        Self {
            walk: WalkSettings::default(),
            eta_points: 32,
            eta_min: 1e-6,
            eta_max: 0.3,
            eps_grid: 512,
            resolution: 1e-3,
            eta_refine_iters: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversePoint {
    /// Blocklength this point answers; equals `ell_lower_bound` from [`converse_ell`].
    pub ell: f64,
    /// Every code with `log_m` nats and error `eps` has average blocklength at least this.
    pub ell_lower_bound: f64,
    pub log_m: f64,
    pub eps: f64,
    pub eta: f64,
    /// Hull vertices (ε, g(ε)) behind the bound.
    pub envelope_vertices: Vec<(f64, f64)>,
}

/// Σ_t (1 − min{1, v_t + e}^K), summed directly.
pub fn converse_g(e: f64, v: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for &vt in v {
        let a = (vt + e).min(1.0);
        if a >= 1.0 {
            break;
        }
        let term = 1.0 - a.powi(k as i32);
        total += term;
    }
    total
}

/// Prefix sums that evaluate [`converse_g`] in O(K + log T).
#[derive(Debug, Clone)]
pub struct GTable {
    v: Vec<f64>,
    k: usize,
    /// prefix[j][n] = Σ_{t<n} v_t^j.
    prefix: Vec<Vec<f64>>,
    binom: Vec<f64>,
}

impl GTable {
    /// `v` must be nondecreasing.
    pub fn new(v: Vec<f64>, k: usize) -> Self {
        let mut prefix = vec![vec![0.0; v.len() + 1]; k + 1];
        for (t, &vt) in v.iter().enumerate() {
            let mut pw = 1.0;
            for row in prefix.iter_mut() {
                row[t + 1] = row[t] + pw;
                pw *= vt;
            }
        }
        let mut binom = vec![1.0; k + 1];
        for j in 1..=k {
            binom[j] = binom[j - 1] * (k + 1 - j) as f64 / j as f64;
        }
        Self { v, k, prefix, binom }
    }

    pub fn eval(&self, e: f64) -> f64 {
        if e >= 1.0 {
            return 0.0;
        }
        let n = self.v.partition_point(|&vt| vt + e < 1.0);
        let mut s = 0.0;
        let mut e_pow = 1.0;
        // Σ_j C(K,j) e^{K−j} S_j, accumulated from j = K down.
        for j in (0..=self.k).rev() {
            s += self.binom[j] * e_pow * self.prefix[j][n];
            e_pow *= e;
        }
        (n as f64 - s).max(0.0)
    }
}

/// Refuses channels outside the symmetric identical-user case.
pub fn converse_scope(an: &ChannelAnalysis) -> Result<()> {
    let ch = &an.channel;
    if !ch.identical_users() || !ch.user(0).is_symmetric() {
        return Err(Error::Scope(
            "the converse needs identical symmetric users; for other channels use the brute-force oracle on small t"
                .into(),
        ));
    }
    Ok(())
}

/// v_t = P[max_{n ≤ t} i(x^n; Y^n) ≥ λ] against the uniform output law,
/// run until v_t is within `tail_tol` of 1.
pub fn crossing_profile(an: &ChannelAnalysis, lambda: f64, walk: WalkSettings, cache: Option<&Cache>) -> Result<Vec<f64>> {
    if lambda <= 0.0 {
        return Ok(vec![1.0]);
    }
    let w = an.channel.user(0);
    values_or(
        cache,
        || Cache::key("profile", &(w.rows(), walk.step_h, walk.tail_tol, lambda)),
        || {
            let law = increment_law(&an.pstar, w, Provenance::ConverseUniformQ { input: 0 })?;
            let s = stopping_time_cdf(&Walk::new(&law, walk.step_h, Rounding::Ceil)?, lambda, walk.tail_tol, None)?;
            Ok(s.cdf.iter().map(|f| (f + s.pruned_mass).min(1.0)).collect())
        },
    )
}

/// Lower convex envelope of g at x, from a grid refined around x.
fn envelope_bound(table: &GTable, x: f64, uniform: usize) -> (f64, Vec<(f64, f64)>) {
    if x >= 1.0 {
        return (0.0, vec![(1.0, 0.0)]);
    }
    let mut grid: Vec<f64> = (0..uniform).map(|i| i as f64 / (uniform - 1) as f64).collect();
    grid.extend(log_grid(1e-9, 1.0, uniform / 2));
    grid.push(x);
    let mut hull = Vec::new();
    for _ in 0..3 {
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let values: Vec<f64> = grid.iter().map(|&e| table.eval(e)).collect();
        hull = lower_hull(&step_lower_points(&grid, &values));
        let i = hull.partition_point(|p| p.0 <= x).clamp(1, hull.len() - 1);
        let (a, b) = (hull[i - 1].0, hull[i].0);
        let (lo, hi) = (hull[i.saturating_sub(2)].0.min(a), hull[(i + 1).min(hull.len() - 1)].0.max(b));
        grid.extend((0..=128).map(|j| lo + (hi - lo) * j as f64 / 128.0));
    }
    (envelope_at(&hull, x).max(0.0), hull)
}

fn bound_value(
    an: &ChannelAnalysis,
    log_m: f64,
    eps: f64,
    eta: f64,
    s: &ConverseSettings,
    cache: Option<&Cache>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let x = eps + eta;
    if x >= 1.0 {
        return Ok((0.0, vec![(1.0, 0.0)]));
    }
    let v = crossing_profile(an, log_m + eta.ln(), s.walk, cache)?;
    let table = GTable::new(v, an.num_users());
    Ok(envelope_bound(&table, x, s.eps_grid.max(8)))
}

/// Lower bound on the average blocklength of any code with `log_m` nats at error ε.
pub fn converse_ell(
    an: &ChannelAnalysis,
    log_m: f64,
    eps: f64,
    eta: f64,
    settings: &ConverseSettings,
    cache: Option<&Cache>,
) -> Result<ConversePoint> {
    converse_scope(an)?;
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(0.0..1.0).contains(&eps) || !(log_m >= 0.0) {
        return Err(Error::InvalidParameter("need eps in [0, 1) and log M ≥ 0".into()));
    }
    let (b, hull) = bound_value(an, log_m, eps, eta, settings, cache)?;
    Ok(ConversePoint { ell: b, ell_lower_bound: b, log_m, eps, eta, envelope_vertices: hull })
}

struct Search<'a> {
    an: &'a ChannelAnalysis,
    eps: f64,
    s: &'a ConverseSettings,
    cache: Option<&'a Cache>,
}

impl Search<'_> {
    fn eta_cap(&self) -> f64 {
        self.s.eta_max.min((1.0 - self.eps) * (1.0 - 1e-9))
    }

    fn value(&self, log_m: f64, eta: f64) -> Result<f64> {
        Ok(bound_value(self.an, log_m, self.eps, eta, self.s, self.cache)?.0)
    }

    /// Maximises the bound over η; stops early once it exceeds `target`.
    fn best_eta(&self, log_m: f64, target: f64) -> Result<(f64, f64)> {
        let grid = log_grid(self.s.eta_min, self.eta_cap(), self.s.eta_points.max(2));
        let mut vals = Vec::with_capacity(grid.len());
        for &eta in &grid {
            let b = self.value(log_m, eta)?;
            if b > target {
                return Ok((b, eta));
            }
            vals.push(b);
        }
        let i = (0..vals.len()).fold(0, |a, j| if vals[j] > vals[a] { j } else { a });
        self.refine(log_m, grid[i.saturating_sub(1)], grid[(i + 1).min(grid.len() - 1)], (vals[i], grid[i]), target)
    }

    fn refine(&self, log_m: f64, a: f64, b: f64, start: (f64, f64), target: f64) -> Result<(f64, f64)> {
        let mut best = start;
        let mut failure = None;
        let (a, b) = (a.max(self.s.eta_min * 1e-3).ln(), b.min(self.eta_cap()).ln());
        if b > a {
            golden_max(a, b, self.s.eta_refine_iters, |le| {
                if best.0 > target || failure.is_some() {
                    return f64::NEG_INFINITY;
                }
                match self.value(log_m, le.exp()) {
                    Ok(v) => {
                        if v > best.0 {
                            best = (v, le.exp());
                        }
                        v
                    }
                    Err(e) => {
                        failure = Some(e);
                        f64::NEG_INFINITY
                    }
                }
            });
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(best),
        }
    }

    /// Smallest certified-infeasible log M at blocklength ℓ, found by bisection.
    fn invert(&self, ell: f64) -> Result<ConversePoint> {
        let c = self.an.capacity;
        let v = self.an.users[0].dispersion.max(0.0);
        let mut hi = c * ell / (1.0 - self.eps) + 3.0 * (v * ell).sqrt() + 5.0;
        // A full maximisation here fixes the η the bisection starts from.
        let (mut bound, mut eta) = self.best_eta(hi, f64::INFINITY)?;
        let mut grow = 0;
        while bound <= ell {
            hi = 2.0 * hi + 5.0;
            grow += 1;
            if grow > 40 {
                return Err(Error::Numerical(format!("converse bisection found no infeasible M at ell = {ell}")));
            }
            (bound, eta) = self.best_eta(hi, f64::INFINITY)?;
        }
        let mut lo = 0.0;
        while hi - lo > self.s.resolution {
            let mid = 0.5 * (lo + hi);
            let first = self.value(mid, eta)?;
            let found = if first > ell {
                Some((first, eta))
            } else {
                let (b, e) = self.refine(mid, eta / 4.0, eta * 4.0, (first, eta), ell)?;
                (b > ell).then_some((b, e))
            };
            match found {
                Some((b, e)) => {
                    hi = mid;
                    bound = b;
                    eta = e;
                }
                None => lo = mid,
            }
        }
        let (b, hull) = bound_value(self.an, hi, self.eps, eta, self.s, self.cache)?;
        debug_assert!((b - bound).abs() <= 1e-9 * (1.0 + b));
        Ok(ConversePoint { ell, ell_lower_bound: b, log_m: hi, eps: self.eps, eta, envelope_vertices: hull })
    }
}

/// Upper bound on log M at each blocklength of `ells`.
pub fn converse_curve(
    an: &ChannelAnalysis,
    eps: f64,
    ells: &[f64],
    settings: &ConverseSettings,
    cache: Option<&Cache>,
) -> Result<Vec<ConversePoint>> {
    converse_scope(an)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(an.capacity > 0.0) {
        return Err(Error::InvalidParameter("the channel has zero capacity".into()));
    }
    if ells.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter("blocklengths must be nonnegative".into()));
    }
    let search = Search { an, eps, s: settings, cache };
    ells.par_iter().map(|&ell| search.invert(ell)).collect()
}
