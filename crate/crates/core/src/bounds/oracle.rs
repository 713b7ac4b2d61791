//! Exhaustive evaluation of the converse's inner maximisation on tiny instances.

use serde::{Deserialize, Serialize};

use crate::channel::{BroadcastChannel, Dmc};
use crate::{Error, Result};

/// Largest number of input sequences the oracle enumerates.
pub const ORACLE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// max over x^t of ∏_k min{1, p_k(x^t) + ε_k}.
    pub value: f64,
    /// First maximising input sequence in lexicographic order.
    pub argmax: Vec<usize>,
    /// p_k at the maximiser.
    pub crossing: Vec<f64>,
}

/// P[max_{n ≤ t} Σ_{i ≤ n} ln(|Y|·W(Y_i|x_i)) ≥ λ] for a fixed input sequence,
/// by exact enumeration of the partial-sum distribution.
pub fn sequence_crossing_prob(w: &Dmc, xs: &[usize], lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let ny = w.output_size() as f64;
    let mut states = vec![(0.0f64, 1.0f64)];
    let mut crossed = 0.0;
    for &x in xs {
        let mut next = Vec::with_capacity(states.len() * w.output_size());
        for &(s, p) in &states {
            for &wy in w.row(x) {
                if wy <= 0.0 {
                    continue;
                }
                let s2 = s + (ny * wy).ln();
                if s2 >= lambda {
                    crossed += p * wy;
                } else {
                    next.push((s2, p * wy));
                }
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        states.clear();
        for (s, p) in next {
            match states.last_mut() {
                Some(last) if (last.0 - s).abs() <= 1e-12 * (1.0 + s.abs()) => last.1 += p,
                _ => states.push((s, p)),
            }
        }
    }
    crossed.min(1.0)
}

/// Brute-force maximum over all x^t of ∏_k min{1, p_k(x^t) + ε_k} with
/// threshold log M + log η, against per-user uniform output measures.
pub fn converse_lt_bruteforce(ch: &BroadcastChannel, log_m: f64, eta: f64, t: usize, eps: &[f64]) -> Result<OracleResult> {
    if eps.len() != ch.num_users() {
        return Err(Error::Dimension(format!("need {} error levels, got {}", ch.num_users(), eps.len())));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let nx = ch.input_size();
    let count = (0..t).try_fold(1usize, |acc, _| acc.checked_mul(nx).filter(|&c| c <= ORACLE_LIMIT));
    let Some(count) = count else {
        return Err(Error::InvalidParameter(format!("|X|^t = {nx}^{t} exceeds the oracle limit {ORACLE_LIMIT}")));
    };
    let lambda = log_m + eta.ln();
    let mut xs = vec![0usize; t];
    let mut best: Option<OracleResult> = None;
    for _ in 0..count {
        let crossing: Vec<f64> = ch.users().iter().map(|w| sequence_crossing_prob(w, &xs, lambda)).collect();
        let value: f64 = crossing.iter().zip(eps).map(|(p, e)| (p + e).min(1.0)).product();
        if best.as_ref().map_or(true, |b| value > b.value) {
            best = Some(OracleResult { value, argmax: xs.clone(), crossing });
        }
        for d in xs.iter_mut().rev() {
            *d += 1;
            if *d < nx {
                break;
            }
            *d = 0;
        }
    }
    Ok(best.expect("at least one sequence"))
}
