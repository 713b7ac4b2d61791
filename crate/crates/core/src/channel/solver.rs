//! Max-min capacity C = max_P min_k I_k(P) by a log-barrier interior-point method.
//!
//! The problem is maximize t subject to I_k(P) ≥ t, P in the simplex. Each
//! barrier subproblem is solved by equality-constrained Newton steps with the
//! exact Hessian of the mutual information. Near-optimal sets are probed by
//! maximising and minimising linear functionals over {P : I_k(P) ≥ C − slack};
//! a wide set means P* is probably not unique.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{divergence, output_distribution, BroadcastChannel, InputDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaidSolution {
    pub capacity: f64,
    pub pstar: InputDistribution,
    pub newton_steps: usize,
    /// Certified barrier duality gap at termination, in nats.
    pub duality_gap: f64,
    pub warnings: Vec<String>,
}

/// Returns (C, P*) to within `tol` nats.
pub fn solve_caid(ch: &BroadcastChannel, tol: f64) -> Result<(f64, InputDistribution)> {
    let s = solve_caid_report(ch, tol)?;
    Ok((s.capacity, s.pstar))
}

/// Like [`solve_caid`] but also reports iterations, the gap and warnings.
pub fn solve_caid_report(ch: &BroadcastChannel, tol: f64) -> Result<CaidSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
    }
    let n = ch.input_size();
    if n == 1 {
        let p = InputDistribution::uniform(1);
        return Ok(CaidSolution { capacity: 0.0, pstar: p, newton_steps: 0, duality_gap: 0.0, warnings: vec![] });
    }
    let p0 = vec![1.0 / n as f64; n];
    let i0 = infos(ch, &p0);
    let t0 = i0.iter().cloned().fold(f64::INFINITY, f64::min) - 0.5;
    let mut z = p0;
    z.push(t0);
    let run = barrier(ch, z, Mode::MaxMin, tol)?;
    let p = normalise(&run.z[..n]);
    let capacity = infos(ch, &p).into_iter().fold(f64::INFINITY, f64::min);
    let pstar = InputDistribution::new(p)?;
    let mut warnings = Vec::new();
    if ch.num_users() > 1 {
        if let Some(w) = uniqueness_probe(ch, &pstar, capacity, tol) {
            warnings.push(w);
        }
    }
    Ok(CaidSolution { capacity, pstar, newton_steps: run.steps, duality_gap: run.gap, warnings })
}

fn normalise(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

pub(crate) fn infos(ch: &BroadcastChannel, p: &[f64]) -> Vec<f64> {
    ch.users()
        .iter()
        .map(|w| {
            let q = output_distribution(p, w);
            super::mutual_information_raw(p, w, &q)
        })
        .collect()
}

#[derive(Clone)]
enum Mode {
    /// Variables (P, t); objective t.
    MaxMin,
    /// Variables P; objective c·P with constraints I_k(P) ≥ floor.
    Extreme { c: Vec<f64>, floor: f64 },
}

struct BarrierRun {
    z: Vec<f64>,
    steps: usize,
    gap: f64,
}

/// Mutual information, gradient and Hessian of every user at `p`.
fn user_derivatives(ch: &BroadcastChannel, p: &[f64]) -> Vec<(f64, Vec<f64>, DMatrix<f64>)> {
    let n = p.len();
    ch.users()
        .iter()
        .map(|w| {
            let q = output_distribution(p, w);
            let d: Vec<f64> = w.rows().iter().map(|r| divergence(r, &q)).collect();
            let info = p.iter().zip(&d).filter(|(px, _)| **px > 0.0).map(|(a, b)| a * b).sum();
            let g = d.iter().map(|v| v - 1.0).collect();
            let mut h = DMatrix::zeros(n, n);
            for (y, &qy) in q.iter().enumerate() {
                if qy <= 0.0 {
                    continue;
                }
                for x in 0..n {
                    let a = w.row(x)[y];
                    if a == 0.0 {
                        continue;
                    }
                    for x2 in x..n {
                        let b = w.row(x2)[y];
                        if b != 0.0 {
                            h[(x, x2)] -= a * b / qy;
                        }
                    }
                }
            }
            for x in 0..n {
                for x2 in 0..x {
                    h[(x, x2)] = h[(x2, x)];
                }
            }
            (info, g, h)
        })
        .collect()
}

fn slack_floor(mode: &Mode, z: &[f64], n: usize) -> f64 {
    match mode {
        Mode::MaxMin => z[n],
        Mode::Extreme { floor, .. } => *floor,
    }
}

fn objective(ch: &BroadcastChannel, z: &[f64], n: usize, mode: &Mode, mu: f64) -> Option<f64> {
    let p = &z[..n];
    if p.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let floor = slack_floor(mode, z, n);
    let mut v = match mode {
        Mode::MaxMin => z[n],
        Mode::Extreme { c, .. } => c.iter().zip(p).map(|(a, b)| a * b).sum::<f64>(),
    };
    for i in infos(ch, p) {
        let s = i - floor;
        if !(s > 0.0) {
            return None;
        }
        v += mu * s.ln();
    }
    v += mu * p.iter().map(|x| x.ln()).sum::<f64>();
    Some(v)
}

/// Scaled barrier model:objective lin + μ(Σ_k ln s_k + Σ_x ln P_x) with
/// s_k = I_k(P) − floor. The curvature splits as B − Σ_k (μ/s_k²) a_k a_kᵀ,
/// a_k = ∇s_k, which the augmented Newton system keeps separate.
struct Local {
    value: f64,
    grad: DVector<f64>,
    b: DMatrix<f64>,
    a: Vec<DVector<f64>>,
    s: Vec<f64>,
}

fn local_model(ch: &BroadcastChannel, z: &[f64], n: usize, mode: &Mode, mu: f64) -> Local {
    let p = &z[..n];
    let nv = z.len();
    let floor = slack_floor(mode, z, n);
    let mut grad = DVector::zeros(nv);
    let mut b = DMatrix::zeros(nv, nv);
    let mut value = match mode {
        Mode::MaxMin => {
            grad[n] = 1.0;
            z[n]
        }
        Mode::Extreme { c, .. } => {
            for x in 0..n {
                grad[x] = c[x];
            }
            c.iter().zip(p).map(|(u, v)| u * v).sum::<f64>()
        }
    };
    let mut a = Vec::new();
    let mut s = Vec::new();
    for (info, g, h) in user_derivatives(ch, p) {
        let sk = info - floor;
        value += mu * sk.ln();
        let mut ak = DVector::zeros(nv);
        for x in 0..n {
            ak[x] = g[x];
            for x2 in 0..n {
                b[(x, x2)] += mu * h[(x, x2)] / sk;
            }
        }
        if matches!(mode, Mode::MaxMin) {
            ak[n] = -1.0;
        }
        grad.axpy(mu / sk, &ak, 1.0);
        a.push(ak);
        s.push(sk);
    }
    for x in 0..n {
        value += mu * p[x].ln();
        grad[x] += mu / p[x];
        b[(x, x)] -= mu / (p[x] * p[x]);
    }
    Local { value, grad, b, a, s }
}

/// Newton direction for the equality-constrained model; returns (Δ, λ²).
fn newton_direction(local: &Local, n: usize, mu: f64) -> Option<(DVector<f64>, f64)> {
    let nv = local.grad.len();
    let k = local.a.len();
    let dim = nv + 1 + k;
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (nv, nv)).copy_from(&local.b);
    for x in 0..n {
        m[(x, nv)] = 1.0;
        m[(nv, x)] = 1.0;
    }
    for (j, (ak, sk)) in local.a.iter().zip(&local.s).enumerate() {
        let col = nv + 1 + j;
        for i in 0..nv {
            m[(i, col)] = ak[i];
            m[(col, i)] = ak[i];
        }
        m[(col, col)] = sk * sk / mu;
    }
    let mut rhs = DVector::zeros(dim);
    for i in 0..nv {
        rhs[i] = -local.grad[i];
    }
    let sol = m.lu().solve(&rhs)?;
    let delta = sol.rows(0, nv).into_owned();
    let dec = local.grad.dot(&delta);
    Some((delta, dec.max(0.0)))
}

fn barrier(ch: &BroadcastChannel, mut z: Vec<f64>, mode: Mode, tol: f64) -> Result<BarrierRun> {
    let n = ch.input_size();
    let m = (ch.num_users() + n) as f64;
    let mut mu = 0.1;
    let mut steps = 0usize;
    loop {
        for _inner in 0..300 {
            let local = local_model(ch, &z, n, &mode, mu);
            let Some((delta, dec)) = newton_direction(&local, n, mu) else {
                return Err(Error::Numerical("singular Newton system in capacity solver".into()));
            };
            steps += 1;
            if dec < 1e-3 * tol {
                break;
            }
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = z.iter().zip(delta.iter()).map(|(a, d)| a + s * d).collect();
                if let Some(v) = objective(ch, &trial, n, &mode, mu) {
                    if dec < 1e-13 || v >= local.value + 0.25 * s * dec {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if m * mu < 0.1 * tol {
            break;
        }
        mu *= 0.1;
    }
    Ok(BarrierRun { z, steps, gap: m * mu })
}

fn uniqueness_probe(ch: &BroadcastChannel, pstar: &InputDistribution, c: f64, tol: f64) -> Option<String> {
    let n = pstar.len();
    let floor = c - 1e-10_f64.max(tol);
    let mut widest: f64 = 0.0;
    for j in 0..2 {
        let base: Vec<f64> = (0..n).map(|x| ((x as f64 + 1.0) * (1.7 + j as f64 * 0.9)).sin()).collect();
        for sign in [1.0, -1.0] {
            let cvec: Vec<f64> = base.iter().map(|v| sign * v).collect();
            let start: Vec<f64> = pstar.probs().iter().map(|p| p.max(1e-12)).collect();
            let start = normalise(&start);
            if objective(ch, &start, n, &Mode::Extreme { c: cvec.clone(), floor }, 1.0).is_none() {
                continue;
            }
            if let Ok(run) = barrier(ch, start, Mode::Extreme { c: cvec, floor }, tol) {
                let q = InputDistribution::new(normalise(&run.z)).ok()?;
                widest = widest.max(q.total_variation(pstar));
            }
        }
    }
    (widest > 1e-3).then(|| {
        format!("P* may be non-unique: near-optimal inputs differ by {widest:.2e} in total variation")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_bsc, make_common_output_pair, Dmc};

    #[test]
    fn single_bsc_capacity() {
        for d in [0.05, 0.11, 0.3] {
            let ch = BroadcastChannel::new("b", vec![make_bsc(d).unwrap()]).unwrap();
            let (c, p) = solve_caid(&ch, 1e-10).unwrap();
            let hb = -d * f64::ln(d) - (1.0 - d) * f64::ln(1.0 - d);
            assert!((c - (2f64.ln() - hb)).abs() < 1e-10, "{d}: {c}");
            assert!((p.probs()[0] - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn z_channel_capacity_matches_closed_form() {
        // Z channel with 1→0 flip probability s: C = ln(1 + (1−s) s^{s/(1−s)}).
        let s: f64 = 0.3;
        let w = Dmc::new(vec![vec![1.0, 0.0], vec![s, 1.0 - s]]).unwrap();
        let ch = BroadcastChannel::new("z", vec![w]).unwrap();
        let (c, _) = solve_caid(&ch, 1e-11).unwrap();
        let closed = (1.0 + (1.0 - s) * s.powf(s / (1.0 - s))).ln();
        assert!((c - closed).abs() < 1e-9, "{c} vs {closed}");
    }

    #[test]
    fn fig3_time_sharing_weight() {
        let ch = make_common_output_pair(0.01, 0.40, 0.15, 0.10).unwrap();
        let sol = solve_caid_report(&ch, 1e-10).unwrap();
        let p = sol.pstar.probs();
        assert!((p[0] - p[1]).abs() < 1e-7 && (p[2] - p[3]).abs() < 1e-7);
        assert!((p[0] + p[1] - 0.486_861_245_9).abs() < 1e-7);
        assert!((sol.capacity - 0.320_533_835_5).abs() < 1e-9);
        assert!(sol.warnings.is_empty(), "{:?}", sol.warnings);
    }

    #[test]
    fn flat_optimum_is_flagged() {
        // Two copies of the same input row: any split between them is optimal.
        let w = Dmc::new(vec![vec![0.9, 0.1], vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let ch = BroadcastChannel::new("dup", vec![w.clone(), w]).unwrap();
        let sol = solve_caid_report(&ch, 1e-10).unwrap();
        assert!(sol.warnings.iter().any(|m| m.contains("non-unique")), "{:?}", sol.warnings);
    }
}
