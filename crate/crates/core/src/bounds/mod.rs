//! Nonasymptotic bounds on the number of messages of a VLSF code.
//!
//! Achievability comes from random coding with a threshold decoder per
//! user. The expected blocklength is the mean of the largest of the K
//! first-passage times, and the error probability is bounded either by the
//! simple e^{−γ} relaxation or by the exact crossing-order probability of
//! the true and an independent codeword. A time-sharing coin that stops at
//! time zero trades error probability for blocklength.
//!
//! The converse applies to symmetric channels with identical users. It
//! lower-bounds the average blocklength of any code with M messages by the
//! lower convex envelope of a sum over the running-maximum crossing
//! probabilities, and it is inverted in M by bisection.

mod achievability;
mod converse;
mod envelope;
mod oracle;

use serde::{Deserialize, Serialize};

pub use achievability::{
    achievability_curve, achievability_eps, evaluate_gamma, max_log_m, AchievabilityCurve, AchievabilityPoint,
    AchievabilitySettings, GammaEval,
};
pub use converse::{
    converse_curve, converse_ell, converse_g, converse_scope, crossing_profile, ConversePoint, ConverseSettings,
    GTable,
};
pub use envelope::{envelope_at, lower_hull, step_lower_points};
pub use oracle::{converse_lt_bruteforce, sequence_crossing_prob, OracleResult, ORACLE_LIMIT};

use crate::walks::{DEFAULT_STEP, DEFAULT_TAIL_TOL};

/// How the error probability of the random-coding bound is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// (M − 1)e^{−γ}.
    Simple,
    /// (M − 1)·max_k P[τ_k ≥ τ̄_k] from the exact stopping laws.
    Tight,
}

/// Discretisation of the information-density walks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSettings {
    /// Lattice step for laws with more than two atoms, in nats.
    pub step_h: f64,
    /// Transient mass at which open-ended DPs stop.
    pub tail_tol: f64,
}

impl Default for WalkSettings {
    fn default() -> Self {
        Self { step_h: DEFAULT_STEP, tail_tol: DEFAULT_TAIL_TOL }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Golden-section search for a maximum of `f` on `[a, b]`; returns the best abscissa seen.
pub(crate) fn golden_max(mut a: f64, mut b: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests;
