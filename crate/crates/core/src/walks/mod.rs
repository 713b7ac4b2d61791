//! Information-density random walks and their first-passage laws.
//!
//! An [`IncrementLaw`] is the distribution of a single-letter information
//! density under one of three couplings. A [`Walk`] is its representation
//! for dynamic programming: two-atom laws keep their exact values and are
//! tracked by the number of down-steps, everything else is rounded onto a
//! lattice of step `h` in the direction that keeps the caller's bound valid.
//!
//! Stopping laws for the independent-codeword walk are computed under the
//! exponentially tilted measure, which turns the tiny crossing
//! probabilities into O(1) masses. Their CDF is stored multiplied by
//! e^{γ} (see [`StoppingLaw::log_scale`]).

mod dp;

use serde::{Deserialize, Serialize};

use crate::channel::{output_distribution, sorted_atoms, Dmc, InputDistribution};
use crate::{Error, Result};
use dp::{first_passage, Passage, Stop};

pub use dp::PRUNE_MASS;

/// Default lattice step in nats.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Default transient-mass tolerance for open-ended DPs.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Hard cap on DP length.
pub const HORIZON_CAP: usize = 1 << 24;

/// Which coupling of (X, Y) an increment law describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// (X, Y) ~ P × W.
    Achievability,
    /// X̄ ~ P independent of Y ~ PW.
    IndependentCodeword,
    /// Fixed input `input`, Y ~ W(·|input), measured against the uniform output law.
    ConverseUniformQ { input: usize },
}

/// Direction in which values are moved onto the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rounding {
    /// Values round down and crossings happen late.
    Floor,
    /// Values round up and crossings happen early.
    Ceil,
}

/// Law of one information-density increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementLaw {
    atoms: Vec<(f64, f64)>,
    /// Probability of a −∞ increment (the codeword is ruled out).
    kill: f64,
    provenance: Provenance,
}

impl IncrementLaw {
    pub fn from_atoms(atoms: Vec<(f64, f64)>, provenance: Provenance) -> Result<Self> {
        Self::with_kill(atoms, 0.0, provenance)
    }

    pub fn with_kill(atoms: Vec<(f64, f64)>, kill: f64, provenance: Provenance) -> Result<Self> {
        if atoms.iter().any(|(v, p)| !v.is_finite() || !(*p >= 0.0)) || !(kill >= 0.0) {
            return Err(Error::InvalidDistribution("atoms need finite values and nonnegative probabilities".into()));
        }
        let atoms: Vec<(f64, f64)> = sorted_atoms(atoms.into_iter().filter(|a| a.1 > 0.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum::<f64>() + kill;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("increment probabilities sum to {total}")));
        }
        Ok(Self { atoms, kill, provenance })
    }

    /// Finite atoms (value, probability), sorted by value.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn kill_prob(&self) -> f64 {
        self.kill
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Mean increment; −∞ when a −∞ atom has positive mass.
    pub fn mean(&self) -> f64 {
        if self.kill > 0.0 {
            return f64::NEG_INFINITY;
        }
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.atoms.last().map_or(f64::NEG_INFINITY, |a| a.0)
    }
}

/// Enumerates the single-letter information density under the requested coupling.
pub fn increment_law(p: &InputDistribution, w: &Dmc, provenance: Provenance) -> Result<IncrementLaw> {
    if p.len() != w.input_size() {
        return Err(Error::Dimension("input distribution and channel disagree on |X|".into()));
    }
    let q = output_distribution(p.probs(), w);
    let mut atoms = Vec::new();
    let mut kill = 0.0;
    match provenance {
        Provenance::Achievability => {
            for (x, &px) in p.probs().iter().enumerate() {
                for (y, &wy) in w.row(x).iter().enumerate() {
                    if px > 0.0 && wy > 0.0 {
                        atoms.push(((wy / q[y]).ln(), px * wy));
                    }
                }
            }
        }
        Provenance::IndependentCodeword => {
            for (y, &qy) in q.iter().enumerate() {
                for (x, &px) in p.probs().iter().enumerate() {
                    if qy > 0.0 && px > 0.0 {
                        let wy = w.row(x)[y];
                        if wy > 0.0 {
                            atoms.push(((wy / qy).ln(), px * qy));
                        } else {
                            kill += px * qy;
                        }
                    }
                }
            }
        }
        Provenance::ConverseUniformQ { input } => {
            if input >= w.input_size() {
                return Err(Error::Dimension(format!("input {input} out of range")));
            }
            let ny = w.output_size() as f64;
            for &wy in w.row(input) {
                if wy > 0.0 {
                    atoms.push(((wy * ny).ln(), wy));
                }
            }
        }
    }
    let total: f64 = atoms.iter().map(|a: &(f64, f64)| a.1).sum::<f64>() + kill;
    let atoms = atoms.into_iter().map(|(v, pr)| (v, pr / total)).collect();
    IncrementLaw::with_kill(atoms, kill / total, provenance)
}

/// True when the law of i(X̄; y) with X̄ ~ P is the same for every output y
/// of positive probability. The achievability and codeword stopping times
/// are then independent.
pub fn codeword_law_is_output_free(p: &InputDistribution, w: &Dmc) -> bool {
    let q = output_distribution(p.probs(), w);
    let mut reference: Option<(Vec<(f64, f64)>, f64)> = None;
    for (y, &qy) in q.iter().enumerate() {
        if qy <= 0.0 {
            continue;
        }
        let mut kill = 0.0;
        let mut finite = Vec::new();
        for (x, &px) in p.probs().iter().enumerate() {
            if px <= 0.0 {
                continue;
            }
            let wy = w.row(x)[y];
            if wy > 0.0 {
                finite.push(((wy / qy).ln(), px));
            } else {
                kill += px;
            }
        }
        let law = (sorted_atoms(finite.into_iter()), kill);
        match &reference {
            None => reference = Some(law),
            Some(r) => {
                if (r.1 - law.1).abs() > 1e-12 || !crate::channel::atoms_close(&r.0, &law.0) {
                    return false;
                }
            }
        }
    }
    true
}

/// Increments rounded onto the lattice hℤ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeWalk {
    pub step_h: f64,
    pub int_atoms: Vec<(i64, f64)>,
    pub kill: f64,
    pub rounding: Rounding,
}

/// Rounds every atom to an integer multiple of `h`.
pub fn quantize(law: &IncrementLaw, h: f64, rounding: Rounding) -> Result<LatticeWalk> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("lattice step must be positive, got {h}")));
    }
    let mut int_atoms: Vec<(i64, f64)> = Vec::new();
    for &(v, p) in &law.atoms {
        let r = v / h;
        // Values within 1e-9 of a lattice point are taken as lying on it.
        let k = match rounding {
            Rounding::Floor => (r + 1e-9).floor(),
            Rounding::Ceil => (r - 1e-9).ceil(),
        };
        if k.abs() > 1e15 {
            return Err(Error::InvalidParameter(format!("increment {v} is too large for lattice step {h}")));
        }
        let k = k as i64;
        match int_atoms.iter_mut().find(|a| a.0 == k) {
            Some(a) => a.1 += p,
            None => int_atoms.push((k, p)),
        }
    }
    int_atoms.sort_by_key(|a| a.0);
    Ok(LatticeWalk { step_h: h, int_atoms, kill: law.kill, rounding })
}

#[derive(Debug, Clone, PartialEq)]
enum Steps {
    /// Exact two-valued increments, up > down.
    Binary { up: f64, down: f64, w_up: f64, w_down: f64 },
    Lattice { h: f64, atoms: Vec<(i64, f64)> },
}

/// DP-ready representation of an increment law.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    steps: Steps,
    kill: f64,
    rounding: Rounding,
    tilted: bool,
}

impl From<LatticeWalk> for Walk {
    fn from(l: LatticeWalk) -> Self {
        Walk { steps: Steps::Lattice { h: l.step_h, atoms: l.int_atoms }, kill: l.kill, rounding: l.rounding, tilted: false }
    }
}

impl Walk {
    /// Keeps laws with at most two finite atoms exact and quantizes the rest.
    pub fn new(law: &IncrementLaw, h: f64, rounding: Rounding) -> Result<Self> {
        match law.atoms.as_slice() {
            [(v, p)] => Ok(Walk {
                steps: Steps::Binary { up: *v, down: v - 1.0, w_up: *p, w_down: 0.0 },
                kill: law.kill,
                rounding,
                tilted: false,
            }),
            [(lo, plo), (hi, phi)] => Ok(Walk {
                steps: Steps::Binary { up: *hi, down: *lo, w_up: *phi, w_down: *plo },
                kill: law.kill,
                rounding,
                tilted: false,
            }),
            _ => Ok(quantize(law, h, rounding)?.into()),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.steps, Steps::Binary { .. })
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    /// Mean of the represented increment under the walk's own weights.
    pub fn drift(&self) -> f64 {
        if self.kill > 0.0 && !self.tilted {
            return f64::NEG_INFINITY;
        }
        match &self.steps {
            Steps::Binary { up, down, w_up, w_down } => up * w_up + down * w_down,
            Steps::Lattice { h, atoms } => atoms.iter().map(|(k, p)| *k as f64 * h * p).sum(),
        }
    }

    /// Reweights each increment v by e^{v}; the −∞ atom disappears.
    fn tilt(&self) -> Walk {
        let steps = match &self.steps {
            Steps::Binary { up, down, w_up, w_down } => {
                Steps::Binary { up: *up, down: *down, w_up: w_up * up.exp(), w_down: w_down * down.exp() }
            }
            Steps::Lattice { h, atoms } => {
                Steps::Lattice { h: *h, atoms: atoms.iter().map(|(k, p)| (*k, p * (*k as f64 * h).exp())).collect() }
            }
        };
        Walk { steps, kill: 0.0, rounding: self.rounding, tilted: true }
    }
}

/// First-passage law of a walk over a threshold γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingLaw {
    pub gamma: f64,
    pub horizon: usize,
    /// F(t) for t = 0..=horizon, multiplied by e^{log_scale}.
    pub cdf: Vec<f64>,
    /// Upper bound on the (scaled) mass with τ > horizon.
    pub tail_mass_bound: f64,
    /// Part of the tail that was trimmed before the horizon.
    pub pruned_mass: f64,
    /// Upper bound on E[(τ − horizon)^+]; infinite when unavailable.
    pub overshoot_tail: f64,
    /// Natural log of the factor the CDF is multiplied by.
    pub log_scale: f64,
}

impl StoppingLaw {
    fn from_passage(gamma: f64, p: Passage, log_scale: f64) -> Self {
        let mut acc = 0.0;
        let cdf: Vec<f64> = p
            .absorbed
            .iter()
            .map(|a| {
                acc += a;
                if log_scale == 0.0 {
                    acc.min(1.0)
                } else {
                    acc
                }
            })
            .collect();
        let pruned_mass: f64 = p.pruned.iter().sum();
        StoppingLaw {
            gamma,
            horizon: cdf.len() - 1,
            cdf,
            tail_mass_bound: p.alive + pruned_mass + p.killed,
            pruned_mass,
            overshoot_tail: p.overshoot_tail,
            log_scale,
        }
    }

    /// Lower bound on F(t), the (scaled) CDF; constant beyond the horizon.
    pub fn cdf_at(&self, t: usize) -> f64 {
        self.cdf[t.min(self.horizon)]
    }

    /// P[τ = t] (scaled).
    pub fn pmf(&self, t: usize) -> f64 {
        match t {
            0 => self.cdf[0],
            t if t <= self.horizon => self.cdf[t] - self.cdf[t - 1],
            _ => 0.0,
        }
    }

    /// Σ_{t < horizon} (1 − F(t)): E[min(τ, horizon)] for an unscaled law.
    pub fn truncated_mean(&self) -> f64 {
        self.cdf[..self.horizon].iter().map(|f| 1.0 - f).sum()
    }
}

/// First-passage law over γ, extended until the transient mass drops below `tail_tol`.
pub fn stopping_time_cdf(walk: &Walk, gamma: f64, tail_tol: f64, cap: Option<usize>) -> Result<StoppingLaw> {
    if walk.tilted {
        return Err(Error::InvalidParameter("tilted walks need a fixed horizon".into()));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tail tolerance must be positive, got {tail_tol}")));
    }
    if !(walk.drift() > 0.0) && cap.is_none() && gamma > 0.0 {
        return Err(Error::InvalidParameter("walk has non-positive drift; supply a horizon cap".into()));
    }
    let cap = cap.unwrap_or(HORIZON_CAP).min(HORIZON_CAP);
    let p = first_passage(walk, gamma, Stop::Tail { tol: tail_tol, cap })?;
    Ok(StoppingLaw::from_passage(gamma, p, 0.0))
}

/// First-passage law over γ computed for exactly `horizon` steps.
pub fn stopping_time_cdf_to(walk: &Walk, gamma: f64, horizon: usize) -> Result<StoppingLaw> {
    if horizon > HORIZON_CAP {
        return Err(Error::InvalidParameter(format!("horizon {horizon} exceeds the cap {HORIZON_CAP}")));
    }
    let log_scale = if walk.tilted { gamma } else { 0.0 };
    let p = first_passage(walk, gamma, Stop::Horizon(horizon))?;
    Ok(StoppingLaw::from_passage(gamma, p, log_scale))
}

/// Scaled first-passage law of the independent-codeword walk, e^{γ}·P[τ̄ ≤ t].
///
/// Refused unless the codeword law is the same for every output symbol,
/// which is what makes it independent of the true-codeword walk.
pub fn codeword_stopping_law(p: &InputDistribution, w: &Dmc, gamma: f64, h: f64, horizon: usize) -> Result<StoppingLaw> {
    if !codeword_law_is_output_free(p, w) {
        return Err(Error::Scope(
            "the independent-codeword law depends on the output symbol; the exact crossing-order probability is unavailable".into(),
        ));
    }
    let law = increment_law(p, w, Provenance::IndependentCodeword)?;
    let walk = Walk::new(&law, h, Rounding::Ceil)?.tilt();
    stopping_time_cdf_to(&walk, gamma, horizon)
}

/// v_t = P[max_{n ≤ t} S_n ≥ threshold] for t = 0..=horizon.
///
/// Trimmed mass is counted as crossed, so v_t never underestimates.
pub fn running_max_crossing(walk: &Walk, threshold: f64, horizon: usize) -> Result<Vec<f64>> {
    if threshold <= 0.0 {
        return Ok(vec![1.0; horizon + 1]);
    }
    let p = first_passage(walk, threshold, Stop::Horizon(horizon))?;
    let mut acc = 0.0;
    Ok(p.absorbed
        .iter()
        .zip(&p.pruned)
        .map(|(a, pr)| {
            acc += a + pr;
            acc.min(1.0)
        })
        .collect())
}

fn check_tails(laws: &[StoppingLaw]) -> Result<usize> {
    if laws.is_empty() {
        return Err(Error::InvalidParameter("need at least one stopping law".into()));
    }
    if laws.iter().any(|l| l.log_scale != 0.0) {
        return Err(Error::InvalidParameter("scaled stopping laws have no expectation".into()));
    }
    if laws.iter().any(|l| !l.overshoot_tail.is_finite() && l.tail_mass_bound > 0.0) {
        return Err(Error::Numerical("a stopping time has a divergent tail (non-positive drift)".into()));
    }
    Ok(laws.iter().map(|l| l.horizon).min().unwrap_or(0))
}

/// Tail of E[τ] past `from`: Σ_{t ≥ from}(1 − F(t)) bounded from above.
fn tail_beyond(l: &StoppingLaw, from: usize) -> f64 {
    let inside: f64 = (from..l.horizon).map(|t| 1.0 - l.cdf[t]).sum();
    let rest = if l.tail_mass_bound > 0.0 { l.overshoot_tail } else { 0.0 };
    inside + rest
}

/// E[max_k τ_k] for independent stopping times, as (truncated value, additive error bound).
pub fn expected_max_stopping(laws: &[StoppingLaw]) -> Result<(f64, f64)> {
    let t = check_tails(laws)?;
    let terms: Vec<f64> = (0..t).map(|s| 1.0 - laws.iter().map(|l| l.cdf[s]).product::<f64>()).collect();
    let value = crate::quad::pairwise_sum(&terms);
    let err = laws.iter().map(|l| tail_beyond(l, t)).sum();
    Ok((value, err))
}

/// Upper bound on E[max_k τ_k] without any independence, through
/// P[max τ_k > t] ≤ min(1, Σ_k P[τ_k > t]); returned as (value, error bound).
pub fn expected_max_stopping_union(laws: &[StoppingLaw]) -> Result<(f64, f64)> {
    let t = check_tails(laws)?;
    let terms: Vec<f64> = (0..t).map(|s| laws.iter().map(|l| 1.0 - l.cdf[s]).sum::<f64>().min(1.0)).collect();
    let value = crate::quad::pairwise_sum(&terms);
    let err = laws.iter().map(|l| tail_beyond(l, t)).sum();
    Ok((value, err))
}

/// A probability stored as `scaled`·e^{−log_scale}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledProb {
    pub scaled: f64,
    pub log_scale: f64,
}

impl ScaledProb {
    pub fn value(&self) -> f64 {
        self.scaled * (-self.log_scale).exp()
    }

    pub fn ln(&self) -> f64 {
        self.scaled.ln() - self.log_scale
    }
}

/// Upper bound on P[τ ≥ τ̄] for independent τ and τ̄.
///
/// `tau_bar` may be a scaled law; the result carries the same scale.
pub fn crossing_order_prob(tau: &StoppingLaw, tau_bar: &StoppingLaw) -> Result<ScaledProb> {
    if tau.log_scale != 0.0 {
        return Err(Error::InvalidParameter("the first stopping law must be unscaled".into()));
    }
    let t = tau.horizon.min(tau_bar.horizon);
    let mut terms = Vec::with_capacity(t + 1);
    for s in 0..=t {
        let survive = if s == 0 { 1.0 } else { 1.0 - tau.cdf[s - 1] };
        terms.push(tau_bar.pmf(s) * survive);
    }
    let exact = crate::quad::pairwise_sum(&terms);
    // τ̄ beyond the common horizon: τ must still be running.
    let survive_t = 1.0 - tau.cdf[t];
    let late_bar: f64 = (t + 1..=tau_bar.horizon).map(|s| tau_bar.pmf(s)).sum();
    let correction =
        tau_bar.pruned_mass + survive_t * (late_bar + (tau_bar.tail_mass_bound - tau_bar.pruned_mass).max(0.0));
    Ok(ScaledProb { scaled: exact + correction, log_scale: tau_bar.log_scale })
}
