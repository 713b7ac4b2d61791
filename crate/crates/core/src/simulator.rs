//! Monte Carlo run of the random-coding threshold scheme with stop feedback.
//!
//! Each trial first flips a coin with bias q. On heads every decoder stops at
//! time zero and outputs the last message. Otherwise a message is drawn
//! uniformly and a fresh codebook of M i.i.d. P*-product codewords is sampled
//! symbol by symbol. Decoder k keeps one information-density score per
//! codeword, stops at the first time some score reaches γ, and outputs the
//! largest index among the codewords crossing at that time. A decoder never
//! reads outputs after its own stopping time.
//!
//! Trial t draws all of its randomness from ChaCha8 seeded with the run seed
//! on stream t, so the result does not depend on how trials are scheduled.
//! A fixed codebook, when requested, comes from stream 2⁶⁴ − 1.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{achievability_eps, evaluate_gamma, Mode, WalkSettings};
use crate::channel::{output_distribution, BroadcastChannel, ChannelAnalysis, InputDistribution};
use crate::quad::pairwise_sum;
use crate::walks::ScaledProb;
use crate::{Error, Result};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;

const CODEBOOK_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub channel: BroadcastChannel,
    pub pstar: InputDistribution,
    /// Number of messages.
    pub m: usize,
    pub gamma: f64,
    /// Probability of stopping every decoder at time zero.
    pub q: f64,
    pub horizon_cap: usize,
    pub trials: usize,
    pub seed: u64,
    /// Reuse one codebook for every trial instead of drawing a fresh one.
    pub fixed_codebook: bool,
}

impl SimConfig {
    /// Configuration over the analysed channel and its optimal input, with
    /// the horizon cap set to ⌈8γ/C⌉.
    pub fn from_analysis(an: &ChannelAnalysis, m: usize, gamma: f64, q: f64, trials: usize, seed: u64) -> Self {
        Self {
            channel: an.channel.clone(),
            pstar: an.pstar.clone(),
            m,
            gamma,
            q,
            horizon_cap: default_horizon(gamma, an.capacity),
            trials,
            seed,
            fixed_codebook: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 1 || self.horizon_cap < 1 || self.trials < 1 {
            return Err(Error::InvalidParameter("M, horizon_cap and trials must all be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidParameter(format!("q must lie in [0, 1], got {}", self.q)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("γ must be finite".into()));
        }
        if self.pstar.len() != self.channel.input_size() {
            return Err(Error::Dimension(format!(
                "input distribution has {} symbols, channel has {}",
                self.pstar.len(),
                self.channel.input_size()
            )));
        }
        Ok(())
    }
}

/// ⌈8γ/C⌉, at least one channel use.
pub fn default_horizon(gamma: f64, capacity: f64) -> usize {
    if gamma > 0.0 && capacity > 0.0 {
        (8.0 * gamma / capacity).ceil().max(1.0) as usize
    } else {
        1
    }
}

/// An error count with its 99% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub count: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RateEstimate {
    pub fn wilson(count: usize, n: usize) -> Self {
        let nf = n as f64;
        let p = count as f64 / nf;
        let z2 = Z99 * Z99;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Z99 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        Self { count, rate: p, lower: (centre - half).clamp(0.0, p), upper: (centre + half).clamp(p, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub per_user_error: Vec<RateEstimate>,
    /// Trials where at least one decoder was wrong.
    pub any_error: RateEstimate,
    /// Empirical E[max_k τ*_k].
    pub mean_max_tau: f64,
    pub se_max_tau: f64,
    /// Trials stopped by the horizon cap; undecided users count as errors
    /// and the blocklength is recorded as the cap.
    pub truncation_count: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Callbacks describing what each decoder reads and decides in one trial.
pub trait TrialObserver {
    /// Decoder `user` reads its channel output at time `n` (1-based).
    fn sample(&mut self, user: usize, n: usize);
    /// Decoder `user` stops at time `n` with message index `output`.
    fn decide(&mut self, user: usize, n: usize, output: usize);
}

struct Silent;

impl TrialObserver for Silent {
    fn sample(&mut self, _: usize, _: usize) {}
    fn decide(&mut self, _: usize, _: usize, _: usize) {}
}

/// What a single trial touched, for checking the stop-feedback contract.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub message: usize,
    /// Times at which each decoder read an output.
    pub samples: Vec<Vec<usize>>,
    /// (stopping time, output) per decoder; `None` when truncated.
    pub decisions: Vec<Option<(usize, usize)>>,
}

impl TrialObserver for TrialTrace {
    fn sample(&mut self, user: usize, n: usize) {
        self.samples[user].push(n);
    }

    fn decide(&mut self, user: usize, n: usize, output: usize) {
        self.decisions[user] = Some((n, output));
    }
}

struct Outcome {
    message: usize,
    errors: Vec<bool>,
    max_tau: usize,
    truncated: bool,
}

/// Precomputed samplers and information-density tables.
struct Scheme<'a> {
    cfg: &'a SimConfig,
    input: WeightedIndex<f64>,
    outputs: Vec<Vec<WeightedIndex<f64>>>,
    /// density[k][x][y] = ln W_k(y|x)/(P*W_k)(y); −∞ when W_k(y|x) = 0.
    density: Vec<Vec<Vec<f64>>>,
    codebook: Option<Vec<Vec<usize>>>,
}

impl<'a> Scheme<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let input = WeightedIndex::new(cfg.pstar.probs().iter().copied())
            .map_err(|e| Error::InvalidDistribution(format!("input distribution: {e}")))?;
        let mut outputs = Vec::new();
        let mut density = Vec::new();
        for w in cfg.channel.users() {
            let q = output_distribution(cfg.pstar.probs(), w);
            let mut samplers = Vec::with_capacity(w.input_size());
            let mut table = Vec::with_capacity(w.input_size());
            for row in w.rows() {
                samplers.push(
                    WeightedIndex::new(row.iter().copied())
                        .map_err(|e| Error::InvalidDistribution(format!("channel row: {e}")))?,
                );
                table.push(
                    row.iter()
                        .zip(&q)
                        .map(|(&p, &qy)| if p > 0.0 { (p / qy).ln() } else { f64::NEG_INFINITY })
                        .collect(),
                );
            }
            outputs.push(samplers);
            density.push(table);
        }
        let mut scheme = Self { cfg, input, outputs, density, codebook: None };
        if cfg.fixed_codebook {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(CODEBOOK_STREAM);
            let book = (0..cfg.m)
                .map(|_| (0..cfg.horizon_cap).map(|_| scheme.input.sample(&mut rng)).collect())
                .collect();
            scheme.codebook = Some(book);
        }
        Ok(scheme)
    }

    fn trial(&self, index: u64, obs: &mut impl TrialObserver) -> Outcome {
        let cfg = self.cfg;
        let k = cfg.channel.num_users();
        let m = cfg.m;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index);
        let shared_stop = cfg.q > 0.0 && rng.random_bool(cfg.q);
        let message = rng.random_range(0..m);
        if shared_stop || cfg.gamma <= 0.0 {
            for user in 0..k {
                obs.decide(user, 0, m - 1);
            }
            return Outcome { message, errors: vec![message != m - 1; k], max_tau: 0, truncated: false };
        }
        let mut scores = vec![0.0f64; k * m];
        let mut decided: Vec<Option<usize>> = vec![None; k];
        let mut symbols = vec![0usize; m];
        let mut max_tau = 0;
        let mut remaining = k;
        for n in 1..=cfg.horizon_cap {
            match &self.codebook {
                Some(book) => symbols.iter_mut().zip(book).for_each(|(s, cw)| *s = cw[n - 1]),
                None => symbols.iter_mut().for_each(|s| *s = self.input.sample(&mut rng)),
            }
            let sent = symbols[message];
            for user in 0..k {
                // Outputs are drawn for every user so each trial's random stream
                // does not depend on which decoders are still running.
                let y = self.outputs[user][sent].sample(&mut rng);
                if decided[user].is_some() {
                    continue;
                }
                obs.sample(user, n);
                let row = &mut scores[user * m..(user + 1) * m];
                let table = &self.density[user];
                let mut winner = None;
                for (j, (s, &x)) in row.iter_mut().zip(&symbols).enumerate() {
                    *s += table[x][y];
                    if *s >= cfg.gamma {
                        winner = Some(j);
                    }
                }
                if let Some(j) = winner {
                    decided[user] = Some(j);
                    obs.decide(user, n, j);
                    max_tau = n;
                    remaining -= 1;
                }
            }
            if remaining == 0 {
                break;
            }
        }
        let truncated = remaining > 0;
        if truncated {
            max_tau = cfg.horizon_cap;
        }
        let errors = decided.iter().map(|d| *d != Some(message)).collect();
        Outcome { message, errors, max_tau, truncated }
    }
}

/// Runs `cfg.trials` independent trials of the scheme.
pub fn run_vlsf(cfg: &SimConfig) -> Result<SimResult> {
    let scheme = Scheme::new(cfg)?;
    let outcomes: Vec<Outcome> = (0..cfg.trials as u64).into_par_iter().map(|t| scheme.trial(t, &mut Silent)).collect();
    let k = cfg.channel.num_users();
    let n = cfg.trials;
    let per_user_error =
        (0..k).map(|u| RateEstimate::wilson(outcomes.iter().filter(|o| o.errors[u]).count(), n)).collect();
    let any_error = RateEstimate::wilson(outcomes.iter().filter(|o| o.errors.iter().any(|e| *e)).count(), n);
    let taus: Vec<f64> = outcomes.iter().map(|o| o.max_tau as f64).collect();
    let mean = pairwise_sum(&taus) / n as f64;
    let sq: Vec<f64> = taus.iter().map(|t| (t - mean) * (t - mean)).collect();
    let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
    Ok(SimResult {
        per_user_error,
        any_error,
        mean_max_tau: mean,
        se_max_tau: (var / n as f64).sqrt(),
        truncation_count: outcomes.iter().filter(|o| o.truncated).count(),
        trials: n,
        seed: cfg.seed,
    })
}

/// Replays trial `index` of `cfg` and records every read and decision.
pub fn trace_trial(cfg: &SimConfig, index: u64) -> Result<TrialTrace> {
    let scheme = Scheme::new(cfg)?;
    let k = cfg.channel.num_users();
    let mut trace = TrialTrace { message: 0, samples: vec![Vec::new(); k], decisions: vec![None; k] };
    let out = scheme.trial(index, &mut trace);
    trace.message = out.message;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sim: SimResult,
    /// q + (1 − q)(M − 1)e^{−γ}.
    pub simple_bound: f64,
    /// The same with the exact confusion probability; `None` when unavailable.
    pub tight_bound: Option<f64>,
    pub tight_note: Option<String>,
    /// (1 − q)·E[max_k τ_k] from the first-passage recursion.
    pub predicted_blocklength: f64,
    pub prediction_error_bound: f64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Runs the simulation and compares it with the analytic error bounds and
/// the predicted average blocklength. Failed comparisons are reported, not raised.
pub fn validate_against_bounds(cfg: &SimConfig, an: &ChannelAnalysis, walk: WalkSettings) -> Result<ValidationReport> {
    if cfg.channel != an.channel {
        return Err(Error::InvalidParameter("configuration and analysis use different channels".into()));
    }
    if cfg.pstar.total_variation(&an.pstar) > 1e-9 {
        return Err(Error::InvalidParameter("the simulated input distribution differs from the analysed one".into()));
    }
    let sim = run_vlsf(cfg)?;
    let m = cfg.m as f64;
    let simple_bound = achievability_eps(ScaledProb { scaled: 1.0, log_scale: cfg.gamma.max(0.0) }, cfg.q, m);
    let simple_eval = evaluate_gamma(an, cfg.gamma, Mode::Simple, walk, None)?;
    let (tight_bound, tight_note) = match evaluate_gamma(an, cfg.gamma, Mode::Tight, walk, None) {
        Ok(e) => (Some(achievability_eps(e.crossing, cfg.q, m)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let predicted_blocklength = (1.0 - cfg.q) * simple_eval.expected_max;
    let prediction_error_bound = (1.0 - cfg.q) * simple_eval.error_bound;

    let worst = sim.per_user_error.iter().map(|r| r.upper).fold(0.0, f64::max);
    let mut checks = vec![Check {
        name: "error vs simple bound".into(),
        passed: worst <= simple_bound,
        detail: format!("99% upper edge {worst:.3e} vs bound {simple_bound:.3e}"),
    }];
    if let Some(t) = tight_bound {
        checks.push(Check {
            name: "error vs tight bound".into(),
            passed: worst <= t,
            detail: format!("99% upper edge {worst:.3e} vs bound {t:.3e}"),
        });
        checks.push(Check {
            name: "tight bound below simple bound".into(),
            passed: t <= simple_bound * (1.0 + 1e-12),
            detail: format!("{t:.3e} vs {simple_bound:.3e}"),
        });
    }
    let gap = (sim.mean_max_tau - predicted_blocklength).abs();
    let allowed = 3.0 * sim.se_max_tau + prediction_error_bound;
    checks.push(Check {
        name: "blocklength vs prediction".into(),
        passed: gap <= allowed,
        detail: format!(
            "empirical {:.4} ± {:.4} vs predicted {:.4}; gap {gap:.4}, allowed {allowed:.4}",
            sim.mean_max_tau, sim.se_max_tau, predicted_blocklength
        ),
    });
    Ok(ValidationReport {
        sim,
        simple_bound,
        tight_bound,
        tight_note,
        predicted_blocklength,
        prediction_error_bound,
        checks,
    })
}
