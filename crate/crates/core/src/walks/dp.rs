//! Absorbing-barrier dynamic programs shared by every walk query.
//!
//! Both grids keep a contiguous window of transient states. Each step
//! convolves the window with the increment weights, removes every state at
//! or above the threshold into the absorbed mass of that step, and trims
//! edge states whose mass has fallen below [`PRUNE_MASS`]. Trimmed mass is
//! reported separately so callers can book it on the conservative side.

use std::collections::VecDeque;

use super::{Rounding, Steps, Walk};
use crate::{Error, Result};

/// Edge states lighter than this are dropped and counted as pruned.
pub const PRUNE_MASS: f64 = 1e-40;

/// Threshold comparisons are shifted by this many lattice units (or binary
/// crossing indices) in the conservative direction.
const THRESHOLD_SLACK: f64 = 1e-9;

pub(crate) enum Stop {
    Horizon(usize),
    Tail { tol: f64, cap: usize },
}

pub(crate) struct Passage {
    /// Mass absorbed at each time 0..=T; scaled by e^{-(S-γ)} for tilted walks.
    pub absorbed: Vec<f64>,
    /// Mass trimmed at each time 0..=T.
    pub pruned: Vec<f64>,
    pub alive: f64,
    pub killed: f64,
    /// Upper bound on E[(τ − T)^+]; infinite unless the walk drifts upward.
    pub overshoot_tail: f64,
}

trait Grid {
    fn step(&mut self);
    /// Removes crossed states at the current time and returns their mass.
    fn absorb(&mut self, n: usize) -> f64;
    /// Trims light edges; returns (mass, Σ mass·distance-to-overshoot-ceiling).
    fn prune(&mut self, n: usize) -> (f64, f64);
    fn alive(&self) -> f64;
    fn wald_weight(&self, n: usize) -> f64;
}

struct BinaryGrid {
    up: f64,
    down: f64,
    w_up: f64,
    w_down: f64,
    gamma: f64,
    slack: f64,
    tilted: bool,
    /// Down-step count of the first window entry.
    lo: i64,
    m: VecDeque<f64>,
}

impl BinaryGrid {
    fn value(&self, n: usize, j: i64) -> f64 {
        (n as f64 - j as f64) * self.up + j as f64 * self.down
    }

    /// Largest down-step count whose value has crossed at time n.
    fn crossing_index(&self, n: usize) -> i64 {
        let raw = (n as f64 * self.up - self.gamma) / (self.up - self.down) + self.slack;
        if raw < -1.0 {
            -1
        } else {
            raw.floor() as i64
        }
    }
}

impl Grid for BinaryGrid {
    fn step(&mut self) {
        if self.m.is_empty() {
            return;
        }
        if self.w_down > 0.0 {
            self.m.push_back(0.0);
        }
        for i in (0..self.m.len()).rev() {
            let from_down = if i > 0 { self.w_down * self.m[i - 1] } else { 0.0 };
            self.m[i] = self.w_up * self.m[i] + from_down;
        }
    }

    fn absorb(&mut self, n: usize) -> f64 {
        let jstar = self.crossing_index(n);
        let mut total = 0.0;
        while self.lo <= jstar {
            let Some(mass) = self.m.pop_front() else { break };
            total += if self.tilted { mass * (self.gamma - self.value(n, self.lo)).exp() } else { mass };
            self.lo += 1;
        }
        total
    }

    fn prune(&mut self, n: usize) -> (f64, f64) {
        let ceiling = self.gamma + self.up;
        let (mut mass, mut weight) = (0.0, 0.0);
        while let Some(&front) = self.m.front() {
            if front >= PRUNE_MASS {
                break;
            }
            mass += front;
            weight += front * (ceiling - self.value(n, self.lo));
            self.m.pop_front();
            self.lo += 1;
        }
        while let Some(&back) = self.m.back() {
            if back >= PRUNE_MASS {
                break;
            }
            let j = self.lo + self.m.len() as i64 - 1;
            mass += back;
            weight += back * (ceiling - self.value(n, j));
            self.m.pop_back();
        }
        (mass, weight)
    }

    fn alive(&self) -> f64 {
        self.m.iter().sum()
    }

    fn wald_weight(&self, n: usize) -> f64 {
        let ceiling = self.gamma + self.up;
        self.m.iter().enumerate().map(|(i, &x)| x * (ceiling - self.value(n, self.lo + i as i64))).sum()
    }
}

struct LatticeGrid {
    h: f64,
    atoms: Vec<(i64, f64)>,
    dmin: i64,
    dmax: i64,
    /// First absorbing lattice index.
    kstar: i64,
    gamma: f64,
    tilted: bool,
    lo: i64,
    m: Vec<f64>,
    buf: Vec<f64>,
}

impl Grid for LatticeGrid {
    fn step(&mut self) {
        if self.m.is_empty() {
            return;
        }
        let width = self.m.len() + (self.dmax - self.dmin) as usize;
        self.buf.clear();
        self.buf.resize(width, 0.0);
        for &(d, w) in &self.atoms {
            let off = (d - self.dmin) as usize;
            let dst = &mut self.buf[off..off + self.m.len()];
            for (o, &x) in dst.iter_mut().zip(&self.m) {
                *o += w * x;
            }
        }
        std::mem::swap(&mut self.m, &mut self.buf);
        self.lo += self.dmin;
    }

    fn absorb(&mut self, _n: usize) -> f64 {
        let mut total = 0.0;
        while let Some(&last) = self.m.last() {
            let k = self.lo + self.m.len() as i64 - 1;
            if k < self.kstar {
                break;
            }
            total += if self.tilted { last * (self.gamma - k as f64 * self.h).exp() } else { last };
            self.m.pop();
        }
        total
    }

    fn prune(&mut self, _n: usize) -> (f64, f64) {
        let ceiling = (self.kstar + self.dmax) as f64 * self.h;
        let (mut mass, mut weight) = (0.0, 0.0);
        let mut front = 0;
        while front < self.m.len() && self.m[front] < PRUNE_MASS {
            mass += self.m[front];
            weight += self.m[front] * (ceiling - (self.lo + front as i64) as f64 * self.h);
            front += 1;
        }
        if front > 0 {
            self.m.drain(..front);
            self.lo += front as i64;
        }
        while let Some(&back) = self.m.last() {
            if back >= PRUNE_MASS {
                break;
            }
            let k = self.lo + self.m.len() as i64 - 1;
            mass += back;
            weight += back * (ceiling - k as f64 * self.h);
            self.m.pop();
        }
        (mass, weight)
    }

    fn alive(&self) -> f64 {
        self.m.iter().sum()
    }

    fn wald_weight(&self, _n: usize) -> f64 {
        let ceiling = (self.kstar + self.dmax) as f64 * self.h;
        self.m.iter().enumerate().map(|(i, &x)| x * (ceiling - (self.lo + i as i64) as f64 * self.h)).sum()
    }
}

fn slack(rounding: Rounding) -> f64 {
    match rounding {
        Rounding::Floor => THRESHOLD_SLACK,
        Rounding::Ceil => -THRESHOLD_SLACK,
    }
}

pub(crate) fn first_passage(walk: &Walk, gamma: f64, stop: Stop) -> Result<Passage> {
    if gamma <= 0.0 {
        // The empty walk sits exactly at 0.
        let len = match stop {
            Stop::Horizon(t) => t + 1,
            Stop::Tail { .. } => 1,
        };
        let mut absorbed = vec![0.0; len];
        absorbed[0] = if walk.tilted { gamma.exp() } else { 1.0 };
        return Ok(Passage { absorbed, pruned: vec![0.0; len], alive: 0.0, killed: 0.0, overshoot_tail: 0.0 });
    }
    match &walk.steps {
        Steps::Binary { up, down, w_up, w_down } => {
            let mut grid = BinaryGrid {
                up: *up,
                down: *down,
                w_up: *w_up,
                w_down: *w_down,
                gamma,
                // A later crossing is a smaller crossing index.
                slack: -slack(walk.rounding),
                tilted: walk.tilted,
                lo: 0,
                m: VecDeque::from(vec![1.0]),
            };
            drive(&mut grid, walk, stop)
        }
        Steps::Lattice { h, atoms } => {
            let dmin = atoms.iter().map(|a| a.0).min().unwrap_or(0);
            let dmax = atoms.iter().map(|a| a.0).max().unwrap_or(0);
            let scaled = gamma / h + slack(walk.rounding);
            if scaled.abs() > 1e15 {
                return Err(Error::InvalidParameter(format!("threshold {gamma} is out of range for lattice step {h}")));
            }
            let mut grid = LatticeGrid {
                h: *h,
                atoms: atoms.clone(),
                dmin,
                dmax,
                kstar: scaled.ceil() as i64,
                gamma,
                tilted: walk.tilted,
                lo: 0,
                m: vec![1.0],
                buf: Vec::new(),
            };
            drive(&mut grid, walk, stop)
        }
    }
}

fn drive<G: Grid>(grid: &mut G, walk: &Walk, stop: Stop) -> Result<Passage> {
    let mut absorbed = vec![grid.absorb(0)];
    let mut pruned = vec![0.0];
    let mut prune_weight = 0.0;
    let mut killed = 0.0;
    let mut alive = grid.alive();
    let mut n = 0usize;
    loop {
        match stop {
            Stop::Horizon(t) if n >= t => break,
            Stop::Tail { tol, .. } if alive < tol => break,
            Stop::Tail { cap, .. } if n >= cap => {
                let mut partial = Vec::with_capacity(absorbed.len());
                let mut acc = 0.0;
                for a in &absorbed {
                    acc += a;
                    partial.push(acc);
                }
                return Err(Error::HorizonExceeded { cap, alive, partial_cdf: partial });
            }
            _ => {}
        }
        n += 1;
        grid.step();
        killed += walk.kill * alive;
        absorbed.push(grid.absorb(n));
        let (pm, pw) = grid.prune(n);
        pruned.push(pm);
        prune_weight += pw;
        alive = grid.alive();
    }
    let drift = walk.drift();
    let overshoot_tail = if walk.tilted || !(drift > 0.0) || walk.kill > 0.0 {
        f64::INFINITY
    } else {
        ((grid.wald_weight(n) + prune_weight) / drift).max(0.0)
    };
    Ok(Passage { absorbed, pruned, alive, killed, overshoot_tail })
}
