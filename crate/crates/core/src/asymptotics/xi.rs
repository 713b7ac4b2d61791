//! The achievability constant (a convex minimisation over one direction) and
//! the converse constant (a log-concave maximisation per abscissa).

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::ProfileFunction;
use super::subspace::{dot, Subspace};
use super::{checked_rho, emax_gaussians, emax_gaussians_certified, log_objective, mean_from_cdf, AsymptoticSettings};
use crate::bounds::golden_max;
use crate::cache::{values_or, Cache};
use crate::channel::{ChannelAnalysis, Direction, VarianceKind};
use crate::special::{psi, psi_prime, tail_integral};
use crate::{Error, Result};

/// Largest stationarity residual accepted in a converse profile.
const RESIDUAL_TOL: f64 = 1e-9;
/// Largest quadrature error estimate accepted for the converse constant.
const QUADRATURE_TOL: f64 = 2e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiA {
    pub value: f64,
    /// Minimising direction.
    pub direction: Direction,
    /// Quadrature and truncation error of the objective at the minimiser.
    pub error_bound: f64,
    /// Largest difference between the best values of the individual starts.
    pub start_spread: f64,
    /// Midpoint-convexity or local-optimality probes that failed.
    pub certificate_failures: usize,
}

impl XiA {
    pub fn converged(&self) -> bool {
        self.start_spread < 1e-8 && self.certificate_failures == 0
    }
}

struct Objective<'a> {
    sub: &'a Subspace,
    rho: &'a [f64],
}

impl Objective<'_> {
    fn eval(&self, z: &[f64]) -> f64 {
        emax_gaussians(&self.sub.grads(z), self.rho).unwrap_or(f64::INFINITY)
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(z))
    }
}

fn nelder_mead(obj: &Objective, start: &[f64], size: f64) -> Result<Vec<f64>> {
    let mut simplex = vec![start.to_vec()];
    for j in 0..start.len() {
        let mut p = start.to_vec();
        p[j] += size;
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-13)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(Objective { sub: obj.sub, rho: obj.rho }, solver)
        .configure(|s| s.max_iters(4000))
        .run()
        .map_err(|e| Error::Numerical(format!("Nelder–Mead failed: {e}")))?;
    Ok(res.state().get_best_param().cloned().unwrap_or_else(|| start.to_vec()))
}

/// Minimises E[max_k ∇I_k(v) + ϱ_k Z_k] over zero-sum directions v.
pub fn xi_a(an: &ChannelAnalysis, settings: &AsymptoticSettings) -> Result<XiA> {
    let rho = checked_rho(an, settings.variance)?;
    let sub = Subspace::new(an)?;
    let obj = Objective { sub: &sub, rho: &rho };
    let r = sub.dim();
    if r == 0 {
        let k = rho.len();
        let (value, err) = emax_gaussians_certified(&vec![0.0; k], &rho)?;
        return Ok(XiA {
            value,
            direction: Direction::zero(sub.input_size),
            error_bound: err,
            start_spread: 0.0,
            certificate_failures: 0,
        });
    }
    let s = sub.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut starts = vec![vec![0.0; r]];
    for _ in 1..settings.multistarts.max(1) {
        starts.push((0..r).map(|_| rng.random_range(-2.0 * s..2.0 * s)).collect());
    }
    let mut results = Vec::with_capacity(starts.len());
    for start in &starts {
        let mut z = nelder_mead(&obj, start, 0.5 * s)?;
        // Coordinate refinement: golden section along each axis.
        for j in 0..r {
            let base = z.clone();
            let (best, _) = golden_max(base[j] - 0.05 * s, base[j] + 0.05 * s, 60, |t| {
                let mut p = base.clone();
                p[j] = t;
                -obj.eval(&p)
            });
            let mut p = base.clone();
            p[j] = best;
            if obj.eval(&p) < obj.eval(&base) {
                z = p;
            }
        }
        let f = obj.eval(&z);
        results.push((z, f));
    }
    let (z, value) = results
        .iter()
        .cloned()
        .fold((Vec::new(), f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let worst = results.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);

    let mut failures = 0;
    for j in 0..r {
        for sign in [-1.0, 1.0] {
            let mut p = z.clone();
            p[j] += sign * 1e-4 * s;
            if obj.eval(&p) < value - 1e-12 {
                failures += 1;
            }
        }
    }
    for _ in 0..32 {
        let a: Vec<f64> = z.iter().map(|zi| zi + rng.random_range(-s..s)).collect();
        let b: Vec<f64> = z.iter().map(|zi| zi + rng.random_range(-s..s)).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        if obj.eval(&mid) > 0.5 * (obj.eval(&a) + obj.eval(&b)) + 1e-10 {
            failures += 1;
        }
    }
    let (_, error_bound) = emax_gaussians_certified(&sub.grads(&z), &rho)?;
    Ok(XiA { value, direction: sub.direction(&z), error_bound, start_spread: worst - value, certificate_failures: failures })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HatV {
    pub direction: Direction,
    /// F_k(w) = Φ((w + ∇I_k(v̂(w)))/ϱ_k).
    pub cdf: Vec<f64>,
    /// Largest |∂/∂z ln ∏_k Φ| at the returned point, in subspace coordinates.
    pub residual: f64,
}

/// Damped Newton ascent of Σ_k ln Φ((w + a_k·z)/ϱ_k) from `start`.
/// Returns the maximiser and the gradient residual.
fn newton_profile(sub: &Subspace, rho: &[f64], w: f64, start: &[f64]) -> (Vec<f64>, f64) {
    let r = sub.dim();
    let mut z = start.to_vec();
    if r == 0 {
        return (z, 0.0);
    }
    let gradient = |z: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let (f, u) = log_objective(w, &sub.grads(z), rho);
        let mut g = vec![0.0; r];
        for (k, a) in sub.coeffs.iter().enumerate() {
            let c = psi(u[k]) / rho[k];
            for j in 0..r {
                g[j] += c * a[j];
            }
        }
        (f, g, u)
    };
    let (mut f, mut g, mut u) = gradient(&z);
    for _ in 0..200 {
        let res = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        // Relative to the size of the terms being balanced, so flat regions at large w still resolve.
        let size: f64 = sub.coeffs.iter().zip(&u).zip(rho).map(|((a, uk), r)| psi(*uk) / r * dot(a, a).sqrt()).sum();
        if res <= 1e-13 * size || res == 0.0 {
            break;
        }
        // −Hessian = Σ_k (−ψ'(u_k))/ϱ_k² a_k a_kᵀ, positive definite on the subspace.
        let mut h = DMatrix::<f64>::zeros(r, r);
        for (k, a) in sub.coeffs.iter().enumerate() {
            let c = -psi_prime(u[k]) / (rho[k] * rho[k]);
            for i in 0..r {
                for j in 0..r {
                    h[(i, j)] += c * a[i] * a[j];
                }
            }
        }
        let gv = DVector::from_column_slice(&g);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&gv),
            None => {
                let ridge = 1e-12 * h.trace().abs().max(1e-300);
                match (h + DMatrix::identity(r, r) * ridge).cholesky() {
                    Some(ch) => ch.solve(&gv),
                    None => gv.clone(),
                }
            }
        };
        let decrement = dot(&g, step.as_slice());
        let znorm = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(decrement > 0.0) || step.amax() <= 1e-15 * (znorm + sub.scale()) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-14 {
            let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(zi, di)| zi + t * di).collect();
            let (fc, gc, uc) = gradient(&cand);
            // Near the optimum f stalls at rounding level; a smaller gradient then decides.
            let smaller = gc.iter().fold(0.0f64, |m, x| m.max(x.abs())) < res;
            if fc >= f + 1e-4 * t * decrement || (t == 1.0 && smaller) {
                z = cand;
                f = fc;
                g = gc;
                u = uc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let res = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (z, res)
}

/// The maximiser v̂(w) of ∏_k Φ((w + ∇I_k(v))/ϱ_k), with kernel directions set to zero.
pub fn hatv(an: &ChannelAnalysis, w: f64, kind: VarianceKind) -> Result<HatV> {
    let rho = checked_rho(an, kind)?;
    let sub = Subspace::new(an)?;
    let (z, residual) = newton_profile(&sub, &rho, w, &vec![0.0; sub.dim()]);
    let (_, u) = log_objective(w, &sub.grads(&z), &rho);
    Ok(HatV { direction: sub.direction(&z), cdf: u.iter().map(|&x| crate::special::cdf(x)).collect(), residual })
}

/// Warm-started Newton sweep from the middle of the grid outwards.
fn solve_profile(sub: &Subspace, rho: &[f64], grid: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = grid.len();
    let r = sub.dim();
    let mut coords = vec![vec![0.0; r]; n];
    let mut residuals = vec![0.0; n];
    let mid = n / 2;
    let (z0, r0) = newton_profile(sub, rho, grid[mid], &vec![0.0; r]);
    coords[mid] = z0;
    residuals[mid] = r0;
    for i in mid + 1..n {
        let (z, res) = newton_profile(sub, rho, grid[i], &coords[i - 1]);
        coords[i] = z;
        residuals[i] = res;
    }
    for i in (0..mid).rev() {
        let (z, res) = newton_profile(sub, rho, grid[i], &coords[i + 1]);
        coords[i] = z;
        residuals[i] = res;
    }
    (coords, residuals)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiC {
    pub value: f64,
    /// Simpson error estimate from halving the grid.
    pub quadrature_error: f64,
    /// Bound on the mass of the two truncated tails.
    pub tail_bound: f64,
    pub profile: ProfileFunction,
}

/// E[max_k H_k] with F_{H_k}(w) = Φ((w + ∇I_k(v̂(w)))/ϱ_k).
pub fn xi_c(an: &ChannelAnalysis, settings: &AsymptoticSettings) -> Result<XiC> {
    xi_c_cached(an, settings, None)
}

/// [`xi_c`] with the solved profile stored in, or read from, `cache`.
pub fn xi_c_cached(an: &ChannelAnalysis, settings: &AsymptoticSettings, cache: Option<&Cache>) -> Result<XiC> {
    let rho = checked_rho(an, settings.variance)?;
    let sub = Subspace::new(an)?;
    let n = settings.grid_n;
    let wm = settings.w_max;
    if n < 5 || !(wm > 0.0) {
        return Err(Error::InvalidParameter(format!("need at least 5 grid points and w_max > 0, got {n}, {wm}")));
    }
    let grid: Vec<f64> = (0..n).map(|i| -wm + 2.0 * wm * i as f64 / (n - 1) as f64).collect();
    let r = sub.dim();
    let key = || {
        Cache::key(
            "profile",
            &(an.channel.to_json_string(), an.pstar.probs(), settings.variance, wm, n, &sub.basis),
        )
    };
    let flat = values_or(cache, key, || {
        let (coords, residuals) = solve_profile(&sub, &rho, &grid);
        let mut out: Vec<f64> = coords.concat();
        out.extend(residuals);
        Ok(out)
    })?;
    if flat.len() != n * (r + 1) {
        return Err(Error::Numerical("cached profile has the wrong size".into()));
    }
    let coords: Vec<Vec<f64>> = if r == 0 { vec![Vec::new(); n] } else { flat[..n * r].chunks(r).map(<[f64]>::to_vec).collect() };
    let residuals = flat[n * r..].to_vec();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "profile stationarity residual {worst:.2e} exceeds {RESIDUAL_TOL:.0e}; refine the grid"
        )));
    }
    let k = rho.len();
    let mut cdf_values = vec![vec![0.0; n]; k];
    let mut prod = vec![0.0; n];
    for i in 0..n {
        let (lp, u) = log_objective(grid[i], &sub.grads(&coords[i]), &rho);
        for (kk, ui) in u.iter().enumerate() {
            cdf_values[kk][i] = crate::special::cdf(*ui);
        }
        prod[i] = lp.exp();
    }
    let (value, quadrature_error) = mean_from_cdf(&grid, &prod);
    if quadrature_error > QUADRATURE_TOL {
        return Err(Error::Numerical(format!(
            "grid too coarse: quadrature error estimate {quadrature_error:.2e}; increase grid_n"
        )));
    }
    // Above w_max the product is at least ∏_k Φ(w/ϱ_k) (v = 0 is feasible);
    // below −w_max some user has ∇I_k(v̂) ≤ 0, so the product is at most Φ(w/ϱ_max).
    let upper: f64 = rho.iter().map(|r| r * tail_integral(wm / r)).sum();
    let rmax = rho.iter().copied().fold(0.0, f64::max);
    let lower = rmax * tail_integral(wm / rmax);
    let directions = coords.iter().map(|z| sub.direction(z)).collect();
    Ok(XiC {
        value,
        quadrature_error,
        tail_bound: upper + lower,
        profile: ProfileFunction { w_grid: grid, directions, cdf_values, stationarity_residuals: residuals },
    })
}
