//! Standard normal helpers and the ratio ψ(x) = φ(x)/Φ(x).
//!
//! Deep in the left tail ψ and its derivatives come from the continued
//! fraction of the Mills ratio, which avoids dividing two underflowing
//! quantities.

use libm::erfc;

use crate::{Error, Result};

/// 1/√(2π).
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this abscissa ψ is evaluated through the Mills-ratio continued fraction.
const LEFT_TAIL: f64 = -8.0;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large positive x.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// ln Φ(x) without underflow in either tail.
pub fn ln_cdf(x: f64) -> f64 {
    if x < LEFT_TAIL {
        let c = mills_fraction(-x);
        -0.5 * x * x + FRAC_1_SQRT_2PI.ln() - c[0].ln()
    } else if x > 3.0 {
        (-sf(x)).ln_1p()
    } else {
        cdf(x).ln()
    }
}

/// ∫_c^∞ (1 − Φ(u)) du = φ(c) − c(1 − Φ(c)); used for Gaussian tail certificates.
pub fn tail_integral(c: f64) -> f64 {
    if c > 38.0 {
        return 0.0;
    }
    (pdf(c) - c * sf(c)).max(0.0)
}

/// First four partial denominators c_j = t + j / c_{j+1} of the Mills-ratio
/// continued fraction; 1/c_1 = (1 − Φ(t))/φ(t).
fn mills_fraction(t: f64) -> [f64; 4] {
    let mut c = t;
    let mut out = [0.0; 4];
    for j in (1..=200u32).rev() {
        c = t + f64::from(j) / c;
        if j <= 4 {
            out[(j - 1) as usize] = c;
        }
    }
    out
}

/// ψ(x) = φ(x)/Φ(x).
pub fn psi(x: f64) -> f64 {
    if x < LEFT_TAIL {
        mills_fraction(-x)[0]
    } else {
        pdf(x) / cdf(x)
    }
}

/// ψ'(x) = −ψ(x)(x + ψ(x)), which lies in (−1, 0).
pub fn psi_prime(x: f64) -> f64 {
    if x < LEFT_TAIL {
        let c = mills_fraction(-x);
        -c[0] / c[1]
    } else {
        let p = psi(x);
        -p * (x + p)
    }
}

/// ψ''(x), which is positive everywhere.
pub fn psi_second(x: f64) -> f64 {
    if x < LEFT_TAIL {
        let c = mills_fraction(-x);
        2.0 * c[0] * (3.0 / c[3] - 2.0 / c[2]) / (c[1] * c[1] * c[2])
    } else {
        let p = psi(x);
        let d = -p * (x + p);
        -d * (x + p) - p * (1.0 + d)
    }
}

/// Inverse of the decreasing map ψ: (−∞, ∞) → (0, ∞).
pub fn psi_inv(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "psi_inv needs a positive finite argument, got {y}"
        )));
    }
    // ψ(x) > −x on x < 0, and ψ(x) ≤ 2φ(x) on x ≥ 0.
    let mut lo = -y;
    let mut hi = if y >= psi(0.0) {
        0.0
    } else {
        (2.0 * (2.0 * FRAC_1_SQRT_2PI / y).ln()).sqrt() + 1.0
    };
    let target = y.ln();
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let p = psi(x);
        let f = p.ln() - target;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx ln ψ = −(x + ψ)
        let slope = -(x + p);
        let mut next = x - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((sf(10.0) - 7.619_853_024_160_527e-24).abs() < 1e-36);
    }

    #[test]
    fn ln_cdf_is_continuous_across_branches() {
        for &x in &[LEFT_TAIL, 3.0] {
            let a = ln_cdf(x - 1e-9);
            let b = ln_cdf(x + 1e-9);
            assert!((a - b).abs() < 1e-7 * (1.0 + a.abs()), "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn psi_branches_agree() {
        let x = LEFT_TAIL;
        let direct = pdf(x) / cdf(x);
        let cf = mills_fraction(-x)[0];
        assert!((direct - cf).abs() < 1e-12 * cf);
        let c = mills_fraction(-x);
        let d_direct = -direct * (x + direct);
        assert!((d_direct + c[0] / c[1]).abs() < 1e-9);
    }

    #[test]
    fn psi_at_zero() {
        assert!((psi(0.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psi_inv_rejects_nonpositive() {
        assert!(psi_inv(0.0).is_err());
        assert!(psi_inv(-1.0).is_err());
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        let c = 1.3;
        let (v, _) = crate::quad::integrate(|u| sf(u), c, c + 40.0, 1e-14);
        assert!((v - tail_integral(c)).abs() < 1e-12);
    }
}
