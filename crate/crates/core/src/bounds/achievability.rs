//! Random-coding achievability with threshold decoders and time sharing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{golden_max, log_grid, Mode, WalkSettings};
use crate::cache::{stopping_law_or, Cache};
use crate::channel::{ChannelAnalysis, Dmc};
use crate::walks::{
    codeword_stopping_law, crossing_order_prob, expected_max_stopping, expected_max_stopping_union, increment_law,
    stopping_time_cdf, Provenance, Rounding, ScaledProb, StoppingLaw, Walk,
};
use crate::{Error, Result};

/// Search settings for [`achievability_curve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AchievabilitySettings {
    pub walk: WalkSettings,
    /// Log-spaced thresholds covering γ/C ∈ [0.3·ℓ_min, 2·ℓ_max].
    pub gamma_points: usize,
    /// Golden-section iterations around each blocklength's best threshold.
    pub refine_iters: usize,
}

impl Default for AchievabilitySettings {
    fn default() -> Self {
        Self { walk: WalkSettings::default(), gamma_points: 96, refine_iters: 16 }
    }
}

/// Everything the bound needs from one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEval {
    pub gamma: f64,
    /// Truncated E[max_k τ_k].
    pub expected_max: f64,
    /// Additive bound on the truncation error of `expected_max`.
    pub error_bound: f64,
    /// Upper bound on the per-competitor confusion probability.
    pub crossing: ScaledProb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityPoint {
    pub ell: f64,
    pub eps: f64,
    pub log_m: f64,
    pub gamma: f64,
    pub q: f64,
    pub mode: Mode,
    pub expected_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityCurve {
    pub points: Vec<AchievabilityPoint>,
    /// One line per blocklength without a feasible code.
    pub diagnostics: Vec<String>,
}

/// q + (1 − q)(M − 1)·P, clipped to 1.
pub fn achievability_eps(crossing: ScaledProb, q: f64, m: f64) -> f64 {
    if m <= 1.0 {
        return q;
    }
    let ln_term = (m - 1.0).ln() + crossing.ln();
    (q + (1.0 - q) * ln_term.exp()).min(1.0)
}

/// Largest log M with [`achievability_eps`] ≤ ε at time-sharing probability q.
///
/// Returns `None` when even M = 1 is infeasible (q ≥ ε).
pub fn max_log_m(crossing: ScaledProb, eps: f64, q: f64) -> Option<f64> {
    if !(q < eps) {
        return None;
    }
    if crossing.scaled <= 0.0 {
        return Some(f64::INFINITY);
    }
    let ratio = (eps - q) / (1.0 - q);
    let ln_x = ratio.ln() + crossing.log_scale - crossing.scaled.ln();
    // Below 2^52 the integer part is exact; above it ln x is within one ulp
    // of ln(1 + ⌊x⌋) and never above it.
    if ln_x < 52.0 * std::f64::consts::LN_2 {
        Some(ln_x.exp().floor().ln_1p())
    } else {
        Some(ln_x)
    }
}

/// Probability of the time-sharing coin needed to reach average blocklength ℓ.
fn time_sharing(eval: &GammaEval, ell: f64) -> f64 {
    let upper = eval.expected_max + eval.error_bound;
    if upper <= 0.0 {
        0.0
    } else {
        (1.0 - ell / upper).max(0.0)
    }
}

struct Engine<'a> {
    an: &'a ChannelAnalysis,
    mode: Mode,
    walk: WalkSettings,
    cache: Option<&'a Cache>,
    /// Index of the first user with the same matrix, per user.
    representative: Vec<usize>,
    independent: bool,
}

impl<'a> Engine<'a> {
    fn new(an: &'a ChannelAnalysis, mode: Mode, walk: WalkSettings, cache: Option<&'a Cache>) -> Result<Self> {
        if !(an.capacity > 0.0) {
            return Err(Error::InvalidParameter("the channel has zero capacity".into()));
        }
        let users = an.channel.users();
        let representative = (0..users.len()).map(|k| (0..=k).find(|&j| users[j] == users[k]).unwrap()).collect();
        if mode == Mode::Tight {
            for w in users {
                if !crate::walks::codeword_law_is_output_free(&an.pstar, w) {
                    return Err(Error::Scope(
                        "tight mode needs an independent-codeword law that does not depend on the output; use simple mode"
                            .into(),
                    ));
                }
            }
        }
        Ok(Self { an, mode, walk, cache, representative, independent: an.walks_independent() })
    }

    fn key_parts<'b>(&'b self, w: &'b Dmc, gamma: f64) -> (&'b [Vec<f64>], &'b [f64], f64, f64, f64) {
        (w.rows(), self.an.pstar.probs(), self.walk.step_h, self.walk.tail_tol, gamma)
    }

    fn tau(&self, w: &Dmc, gamma: f64) -> Result<StoppingLaw> {
        stopping_law_or(
            self.cache,
            || Cache::key("tau", &self.key_parts(w, gamma)),
            || {
                let law = increment_law(&self.an.pstar, w, Provenance::Achievability)?;
                let walk = Walk::new(&law, self.walk.step_h, Rounding::Floor)?;
                stopping_time_cdf(&walk, gamma, self.walk.tail_tol, None)
            },
        )
    }

    fn tau_bar(&self, w: &Dmc, gamma: f64, horizon: usize) -> Result<StoppingLaw> {
        stopping_law_or(
            self.cache,
            || Cache::key("tau_bar", &(self.key_parts(w, gamma), horizon)),
            || codeword_stopping_law(&self.an.pstar, w, gamma, self.walk.step_h, horizon),
        )
    }

    fn evaluate(&self, gamma: f64) -> Result<GammaEval> {
        let users = self.an.channel.users();
        let mut own: Vec<Option<StoppingLaw>> = vec![None; users.len()];
        for k in 0..users.len() {
            if self.representative[k] == k {
                own[k] = Some(self.tau(&users[k], gamma)?);
            }
        }
        let laws: Vec<StoppingLaw> =
            self.representative.iter().map(|&r| own[r].clone().expect("representative computed")).collect();
        let (expected_max, error_bound) =
            if self.independent { expected_max_stopping(&laws)? } else { expected_max_stopping_union(&laws)? };
        let simple = ScaledProb { scaled: 1.0, log_scale: gamma };
        let crossing = match self.mode {
            Mode::Simple => simple,
            Mode::Tight => {
                let mut worst = ScaledProb { scaled: 0.0, log_scale: gamma };
                for k in 0..users.len() {
                    if self.representative[k] != k {
                        continue;
                    }
                    let tau = own[k].as_ref().expect("representative computed");
                    let bar = self.tau_bar(&users[k], gamma, tau.horizon)?;
                    let p = crossing_order_prob(tau, &bar)?;
                    if p.ln() > worst.ln() || worst.scaled == 0.0 {
                        worst = p;
                    }
                }
                // Both are valid upper bounds; keep the smaller.
                if worst.ln() < simple.ln() {
                    worst
                } else {
                    simple
                }
            }
        };
        Ok(GammaEval { gamma, expected_max, error_bound, crossing })
    }
}

/// Evaluates the achievability ingredients at a single threshold.
pub fn evaluate_gamma(
    an: &ChannelAnalysis,
    gamma: f64,
    mode: Mode,
    walk: WalkSettings,
    cache: Option<&Cache>,
) -> Result<GammaEval> {
    Engine::new(an, mode, walk, cache)?.evaluate(gamma)
}

fn best_for(eval: &GammaEval, eps: f64, ell: f64) -> Option<(f64, f64)> {
    let q = time_sharing(eval, ell);
    max_log_m(eval.crossing, eps, q).map(|m| (m, q))
}

/// Best achievable log M at each blocklength of `ells`.
pub fn achievability_curve(
    an: &ChannelAnalysis,
    eps: f64,
    ells: &[f64],
    mode: Mode,
    settings: &AchievabilitySettings,
    cache: Option<&Cache>,
) -> Result<AchievabilityCurve> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if ells.is_empty() || ells.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter("blocklength grid must be nonempty and nonnegative".into()));
    }
    let engine = Engine::new(an, mode, settings.walk, cache)?;
    let c = an.capacity;
    let ell_min = ells.iter().cloned().fold(f64::INFINITY, f64::min);
    let ell_max = ells.iter().cloned().fold(0.0, f64::max);
    let lo = (0.3 * ell_min * c).max(0.5);
    let hi = (2.0 * ell_max * c).max(2.0 * lo);
    let grid = log_grid(lo, hi, settings.gamma_points.max(2));
    let mut pool: Vec<GammaEval> = grid.par_iter().map(|&g| engine.evaluate(g)).collect::<Result<Vec<_>>>()?;

    if settings.refine_iters > 0 {
        let base = pool.clone();
        let score = |e: &GammaEval, ell: f64| best_for(e, eps, ell).map_or(f64::NEG_INFINITY, |b| b.0);
        let brackets: Vec<(f64, f64)> = ells
            .iter()
            .filter_map(|&ell| {
                let (i, s) = base
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (i, score(e, ell)))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                (s > f64::NEG_INFINITY).then(|| (base[i.saturating_sub(1)].gamma, base[(i + 1).min(base.len() - 1)].gamma))
            })
            .collect();
        let refined: Vec<Vec<GammaEval>> = ells
            .par_iter()
            .zip(brackets.par_iter())
            .map(|(&ell, &(a, b))| {
                let mut seen = Vec::new();
                let mut failure = None;
                golden_max(a, b, settings.refine_iters, |g| match engine.evaluate(g) {
                    Ok(e) => {
                        let s = score(&e, ell);
                        seen.push(e);
                        s
                    }
                    Err(err) => {
                        failure.get_or_insert(err);
                        f64::NEG_INFINITY
                    }
                });
                match failure {
                    Some(err) => Err(err),
                    None => Ok(seen),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        pool.extend(refined.into_iter().flatten());
    }

    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    for &ell in ells {
        let best = pool
            .iter()
            .filter_map(|e| best_for(e, eps, ell).map(|(m, q)| (m, q, e)))
            .filter(|b| b.0.is_finite())
            .fold(None::<(f64, f64, &GammaEval)>, |acc, b| match acc {
                Some(a) if a.0 >= b.0 => Some(a),
                _ => Some(b),
            });
        match best {
            Some((log_m, q, e)) => points.push(AchievabilityPoint {
                ell,
                eps,
                log_m,
                gamma: e.gamma,
                q,
                mode,
                expected_max: e.expected_max,
            }),
            None => diagnostics.push(format!("ell = {ell}: no threshold gives a time-sharing probability below eps")),
        }
    }
    Ok(AchievabilityCurve { points, diagnostics })
}
