//! Channel models and single-letter information quantities.
//!
//! A [`BroadcastChannel`] is a list of K stochastic matrices over a common
//! input alphabet; the outputs are conditionally independent given the input.
//! [`analyze`] solves the max-min capacity problem and collects every moment
//! the bounds and constants need.

mod file;
mod solver;

pub use file::{load_channel, ChannelFile, UserFile};
pub use solver::{solve_caid, solve_caid_report, CaidSolution};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// A discrete memoryless channel W(y|x), one row per input symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dmc {
    input_size: usize,
    output_size: usize,
    rows: Vec<Vec<f64>>,
}

impl Dmc {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let input_size = rows.len();
        if input_size == 0 {
            return Err(Error::Dimension("channel needs at least one input".into()));
        }
        let output_size = rows[0].len();
        if output_size == 0 {
            return Err(Error::Dimension("channel needs at least one output".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != output_size {
                return Err(Error::Dimension(format!(
                    "row {x} has {} entries, expected {output_size}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidDistribution(format!("row {x} has an entry outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidDistribution(format!("row {x} sums to {s}")));
            }
        }
        Ok(Self { input_size, output_size, rows })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    /// True when every row is a permutation of the first row and every column
    /// a permutation of the first column (Gallager-style symmetry).
    pub fn is_symmetric(&self) -> bool {
        let sorted = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v
        };
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-12);
        let r0 = sorted(self.rows[0].clone());
        let rows_ok = self.rows.iter().all(|r| close(&sorted(r.clone()), &r0));
        let col = |y: usize| sorted(self.rows.iter().map(|r| r[y]).collect());
        let c0 = col(0);
        rows_ok && (0..self.output_size).all(|y| close(&col(y), &c0))
    }

    fn approx_eq(&self, other: &Dmc, tol: f64) -> bool {
        self.input_size == other.input_size
            && self.output_size == other.output_size
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol))
    }
}

/// K channels sharing one input alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastChannel {
    pub name: String,
    input_size: usize,
    users: Vec<Dmc>,
}

impl BroadcastChannel {
    pub fn new(name: impl Into<String>, users: Vec<Dmc>) -> Result<Self> {
        let first = users
            .first()
            .ok_or_else(|| Error::Dimension("a broadcast channel needs at least one user".into()))?;
        let input_size = first.input_size;
        if let Some((k, _)) = users.iter().enumerate().find(|(_, u)| u.input_size != input_size) {
            return Err(Error::Dimension(format!("user {k} disagrees on the input alphabet size")));
        }
        Ok(Self { name: name.into(), input_size, users })
    }

    /// `k` identical copies of one channel.
    pub fn replicate(name: impl Into<String>, w: &Dmc, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("replication factor must be at least 1".into()));
        }
        Self::new(name, vec![w.clone(); k])
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[Dmc] {
        &self.users
    }

    pub fn user(&self, k: usize) -> &Dmc {
        &self.users[k]
    }

    /// All users carry the same matrix.
    pub fn identical_users(&self) -> bool {
        self.users.iter().all(|u| u.approx_eq(&self.users[0], 1e-12))
    }
}

/// A probability vector on the input alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    probs: Vec<f64>,
}

impl InputDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty input distribution".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution("negative or non-finite probability".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidDistribution(format!("input distribution sums to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total_variation(&self, other: &InputDistribution) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// A zero-sum perturbation of an input distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    components: Vec<f64>,
}

impl Direction {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let s: f64 = components.iter().sum();
        let scale = components.iter().map(|c| c.abs()).fold(1.0, f64::max);
        if s.abs() > 1e-10 * scale {
            return Err(Error::InvalidParameter(format!("direction components sum to {s}, not 0")));
        }
        Ok(Self { components })
    }

    pub fn zero(n: usize) -> Self {
        Self { components: vec![0.0; n] }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }
}

fn check_dims(p: &InputDistribution, w: &Dmc) -> Result<()> {
    if p.len() != w.input_size {
        return Err(Error::Dimension(format!(
            "input distribution has {} entries, channel has {} inputs",
            p.len(),
            w.input_size
        )));
    }
    Ok(())
}

/// Output distribution PW(y) = Σ_x P(x)W(y|x).
pub fn output_distribution(p: &[f64], w: &Dmc) -> Vec<f64> {
    let mut q = vec![0.0; w.output_size];
    for (px, row) in p.iter().zip(&w.rows) {
        if *px > 0.0 {
            for (qy, wy) in q.iter_mut().zip(row) {
                *qy += px * wy;
            }
        }
    }
    q
}

/// D(row ‖ q) in nats; infinite if `row` puts mass where `q` does not.
pub fn divergence(row: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in row.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).ln();
        }
    }
    d
}

/// Per-input mean and variance of i(x;Y) under W(·|x).
struct DensityMoments {
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn density_moments(w: &Dmc, q: &[f64]) -> DensityMoments {
    let mut mean = vec![0.0; w.input_size];
    let mut var = vec![0.0; w.input_size];
    for x in 0..w.input_size {
        let row = &w.rows[x];
        let m = divergence(row, q);
        let mut v = 0.0;
        for (&wy, &qy) in row.iter().zip(q) {
            if wy > 0.0 {
                let d = (wy / qy).ln() - m;
                v += wy * d * d;
            }
        }
        mean[x] = m;
        var[x] = v;
    }
    DensityMoments { mean, var }
}

/// I(P, W) in nats.
pub fn mutual_information(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    check_dims(p, w)?;
    let q = output_distribution(&p.probs, w);
    Ok(mutual_information_raw(&p.probs, w, &q))
}

pub(crate) fn mutual_information_raw(p: &[f64], w: &Dmc, q: &[f64]) -> f64 {
    p.iter()
        .zip(&w.rows)
        .filter(|(px, _)| **px > 0.0)
        .map(|(px, row)| px * divergence(row, q))
        .sum()
}

/// Conditional information variance E[Var(i(X;Y) | X)].
pub fn conditional_info_variance(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    check_dims(p, w)?;
    let q = output_distribution(&p.probs, w);
    let m = density_moments(w, &q);
    Ok(p.probs.iter().zip(&m.var).filter(|(px, _)| **px > 0.0).map(|(px, v)| px * v).sum())
}

/// Unconditional information variance Var(i(X;Y)).
pub fn unconditional_info_variance(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    check_dims(p, w)?;
    let q = output_distribution(&p.probs, w);
    let m = density_moments(w, &q);
    let i = mutual_information_raw(&p.probs, w, &q);
    Ok(p
        .probs
        .iter()
        .enumerate()
        .filter(|(_, px)| **px > 0.0)
        .map(|(x, px)| px * (m.var[x] + (m.mean[x] - i).powi(2)))
        .sum())
}

/// Third absolute central moment E|i(X;Y) − I|³.
pub fn third_abs_moment(p: &InputDistribution, w: &Dmc) -> Result<f64> {
    check_dims(p, w)?;
    let q = output_distribution(&p.probs, w);
    let i = mutual_information_raw(&p.probs, w, &q);
    let mut t = 0.0;
    for (px, row) in p.probs.iter().zip(&w.rows) {
        if *px > 0.0 {
            for (&wy, &qy) in row.iter().zip(&q) {
                if wy > 0.0 {
                    t += px * wy * ((wy / qy).ln() - i).abs().powi(3);
                }
            }
        }
    }
    Ok(t)
}

/// Binary symmetric channel with crossover `delta`; output 0 matches input 0.
pub fn make_bsc(delta: f64) -> Result<Dmc> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidParameter(format!("crossover {delta} outside (0, 1/2]")));
    }
    Dmc::new(vec![vec![1.0 - delta, delta], vec![delta, 1.0 - delta]])
}

/// Noiseless channel on `n` symbols.
pub fn make_identity(n: usize) -> Result<Dmc> {
    Dmc::new((0..n).map(|x| (0..n).map(|y| if x == y { 1.0 } else { 0.0 }).collect()).collect())
}

/// Two users, four inputs in two blocks {0,1} and {2,3}, one binary output
/// each. User k sends block r through a BSC with crossover `delta[k][r]`;
/// output 0 is the match of the lower input of each block.
pub fn make_common_output_pair(d11: f64, d12: f64, d21: f64, d22: f64) -> Result<BroadcastChannel> {
    let deltas = [[d11, d12], [d21, d22]];
    let mut users = Vec::with_capacity(2);
    for row in deltas {
        let mut rows = Vec::with_capacity(4);
        for d in row {
            if !(d > 0.0 && d < 0.5) {
                return Err(Error::InvalidParameter(format!("crossover {d} outside (0, 1/2)")));
            }
            rows.push(vec![1.0 - d, d]);
            rows.push(vec![d, 1.0 - d]);
        }
        users.push(Dmc::new(rows)?);
    }
    BroadcastChannel::new("common-output-pair", users)
}

/// Which per-user variance normalises the second-order constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VarianceKind {
    /// E[Var(i | X)] at the capacity-achieving input.
    Conditional,
    /// Var(i) at the capacity-achieving input.
    #[default]
    Unconditional,
}

/// Single-letter quantities of one user at the capacity-achieving input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserMoments {
    /// Individual capacity max_P I_k(P).
    pub capacity: f64,
    pub info_at_pstar: f64,
    /// Conditional information variance.
    pub dispersion: f64,
    pub uncond_variance: f64,
    pub third_moment: f64,
    /// √(dispersion / geometric mean of dispersions).
    pub rho: f64,
    /// D(W_k(·|x) ‖ P*W_k) for every input x.
    pub divergences: Vec<f64>,
    pub output_caod: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    /// I_k(P*) = C for every user.
    pub all_users_active: bool,
    /// Every conditional variance is positive.
    pub positive_dispersion: bool,
    /// P*(x) > 0 for every input.
    pub full_support: bool,
    /// 1/C_(i) + i/C_(K) > i/C for i < K with capacities sorted decreasingly.
    pub converse_condition: bool,
}

impl AssumptionFlags {
    pub fn all(&self) -> bool {
        self.all_users_active && self.positive_dispersion && self.full_support && self.converse_condition
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelAnalysis {
    pub channel: BroadcastChannel,
    pub capacity: f64,
    pub pstar: InputDistribution,
    pub users: Vec<UserMoments>,
    /// Geometric mean of the conditional variances.
    pub v_geomean: f64,
    pub flags: AssumptionFlags,
    pub warnings: Vec<String>,
}

impl ChannelAnalysis {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn variances(&self, kind: VarianceKind) -> Vec<f64> {
        self.users
            .iter()
            .map(|u| match kind {
                VarianceKind::Conditional => u.dispersion,
                VarianceKind::Unconditional => u.uncond_variance,
            })
            .collect()
    }

    /// Geometric mean of the chosen per-user variances.
    pub fn geomean(&self, kind: VarianceKind) -> f64 {
        geometric_mean(&self.variances(kind))
    }

    /// √(V_k / V) for the chosen variance; NaN when the mean vanishes.
    pub fn rho(&self, kind: VarianceKind) -> Vec<f64> {
        let v = self.geomean(kind);
        self.variances(kind)
            .iter()
            .map(|vk| if v > 0.0 { (vk / v).sqrt() } else { f64::NAN })
            .collect()
    }

    /// ∇I_k(v) = Σ_x v_x D(W_k(·|x) ‖ P*W_k).
    pub fn directional_derivative(&self, k: usize, v: &Direction) -> Result<f64> {
        let user = self
            .users
            .get(k)
            .ok_or_else(|| Error::Dimension(format!("user {k} out of range")))?;
        if v.components.len() != user.divergences.len() {
            return Err(Error::Dimension("direction length differs from input alphabet".into()));
        }
        Ok(dot_finite(&v.components, &user.divergences))
    }

    /// True when every user's law of i(x; Y_k) under W_k(·|x) is the same for
    /// every input in the support of P*. The K information-density walks are
    /// then independent.
    pub fn walks_independent(&self) -> bool {
        self.channel.users().iter().enumerate().all(|(k, w)| {
            let q = &self.users[k].output_caod;
            let mut reference: Option<Vec<(f64, f64)>> = None;
            for (x, px) in self.pstar.probs().iter().enumerate() {
                if *px <= 0.0 {
                    continue;
                }
                let law = sorted_atoms(w.row(x).iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| ((a / b).ln(), *a)));
                match &reference {
                    None => reference = Some(law),
                    Some(r) => {
                        if !atoms_close(r, &law) {
                            return false;
                        }
                    }
                }
            }
            true
        })
    }
}

fn dot_finite(v: &[f64], d: &[f64]) -> f64 {
    v.iter().zip(d).filter(|(a, _)| **a != 0.0).map(|(a, b)| a * b).sum()
}

pub(crate) fn geometric_mean(xs: &[f64]) -> f64 {
    if xs.iter().any(|&x| x <= 0.0) {
        return 0.0;
    }
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

pub(crate) fn sorted_atoms(it: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = it.collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (val, p) in v {
        match out.last_mut() {
            Some(last) if (last.0 - val).abs() <= 1e-13 * (1.0 + val.abs()) => last.1 += p,
            _ => out.push((val, p)),
        }
    }
    out
}

pub(crate) fn atoms_close(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(u, v)| (u.0 - v.0).abs() <= 1e-12 * (1.0 + u.0.abs()) && (u.1 - v.1).abs() <= 1e-12)
}

/// Solves the max-min capacity problem and fills every per-user moment.
pub fn analyze(ch: &BroadcastChannel, tol: f64) -> Result<ChannelAnalysis> {
    let sol = solve_caid_report(ch, tol)?;
    let mut warnings = sol.warnings.clone();
    let pstar = sol.pstar.clone();
    let mut users = Vec::with_capacity(ch.num_users());
    for (k, w) in ch.users().iter().enumerate() {
        let single = BroadcastChannel::new(format!("user-{k}"), vec![w.clone()])?;
        let own = solve_caid_report(&single, tol)?;
        let q = output_distribution(pstar.probs(), w);
        let info = mutual_information_raw(pstar.probs(), w, &q);
        users.push(UserMoments {
            capacity: own.capacity.max(info),
            info_at_pstar: info,
            dispersion: conditional_info_variance(&pstar, w)?,
            uncond_variance: unconditional_info_variance(&pstar, w)?,
            third_moment: third_abs_moment(&pstar, w)?,
            rho: f64::NAN,
            divergences: w.rows().iter().map(|r| divergence(r, &q)).collect(),
            output_caod: q,
        });
    }
    let disp: Vec<f64> = users.iter().map(|u| u.dispersion).collect();
    let v_geomean = geometric_mean(&disp);
    for u in &mut users {
        u.rho = if v_geomean > 0.0 { (u.dispersion / v_geomean).sqrt() } else { f64::NAN };
    }
    let c = sol.capacity;
    let active_tol = 1e-6_f64.max(100.0 * tol);
    let all_users_active = users.iter().all(|u| (u.info_at_pstar - c).abs() <= active_tol);
    let positive_dispersion = users.iter().all(|u| u.dispersion > 1e-12);
    let full_support = pstar.probs().iter().all(|&p| p > 1e-9);
    let converse_condition = converse_condition(&users.iter().map(|u| u.capacity).collect::<Vec<_>>(), c);
    if !positive_dispersion {
        warnings.push("a user has zero dispersion; second-order constants are undefined".into());
    }
    Ok(ChannelAnalysis {
        channel: ch.clone(),
        capacity: c,
        pstar,
        users,
        v_geomean,
        flags: AssumptionFlags { all_users_active, positive_dispersion, full_support, converse_condition },
        warnings,
    })
}

fn converse_condition(caps: &[f64], c: f64) -> bool {
    if !(c > 0.0) {
        return false;
    }
    let mut s = caps.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let last = s[s.len() - 1];
    (1..s.len()).all(|i| {
        let i_f = i as f64;
        1.0 / s[i - 1] + i_f / last > i_f / c * (1.0 + 1e-12)
    })
}
