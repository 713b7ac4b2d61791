//! Coordinates on the zero-sum directions that move at least one user's
//! mutual information. Directions in the common kernel of every ∇I_k are
//! dropped, which pins them to zero in every profile.

use nalgebra::DMatrix;

use crate::channel::{ChannelAnalysis, Direction};
use crate::{Error, Result};

/// Singular values of the projected divergence table below this count as zero.
pub(crate) const KERNEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct Subspace {
    /// Orthonormal zero-sum basis vectors of length |X|.
    pub basis: Vec<Vec<f64>>,
    /// coeffs[k][j] = ∇I_k(basis[j]).
    pub coeffs: Vec<Vec<f64>>,
    pub input_size: usize,
}

/// Divergence rows with their uniform mean removed; they act on zero-sum
/// directions exactly like the raw rows.
pub(crate) fn projected_divergences(an: &ChannelAnalysis) -> Result<Vec<Vec<f64>>> {
    an.users
        .iter()
        .map(|u| {
            if u.divergences.iter().any(|d| !d.is_finite()) {
                return Err(Error::Scope("a divergence D(W_k(·|x) ‖ P*W_k) is infinite".into()));
            }
            let m = u.divergences.iter().sum::<f64>() / u.divergences.len() as f64;
            Ok(u.divergences.iter().map(|d| d - m).collect())
        })
        .collect()
}

impl Subspace {
    pub fn new(an: &ChannelAnalysis) -> Result<Self> {
        let rows = projected_divergences(an)?;
        let n = an.pstar.len();
        let k = rows.len();
        let m = DMatrix::from_fn(k, n, |i, j| rows[i][j]);
        let svd = m.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
        let mut basis = Vec::new();
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= KERNEL_TOL {
                continue;
            }
            let mut b: Vec<f64> = vt.row(i).iter().copied().collect();
            // Rows are zero-sum, so b is too up to rounding; restore it exactly.
            let mean = b.iter().sum::<f64>() / n as f64;
            b.iter_mut().for_each(|x| *x -= mean);
            let norm = dot(&b, &b).sqrt();
            if norm <= KERNEL_TOL {
                continue;
            }
            b.iter_mut().for_each(|x| *x /= norm);
            // Fix the sign so the largest component is positive.
            let lead = b.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                b.iter_mut().for_each(|x| *x = -*x);
            }
            basis.push(b);
        }
        let coeffs = rows.iter().map(|r| basis.iter().map(|b| dot(r, b)).collect()).collect();
        Ok(Self { basis, coeffs, input_size: n })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// (∇I_k(v(z)))_k for v(z) = Σ_j z_j basis_j.
    pub fn grads(&self, z: &[f64]) -> Vec<f64> {
        self.coeffs.iter().map(|a| dot(a, z)).collect()
    }

    pub fn direction(&self, z: &[f64]) -> Direction {
        let mut v = vec![0.0; self.input_size];
        for (b, zj) in self.basis.iter().zip(z) {
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi += zj * bi;
            }
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        Direction::new(v).expect("combination of zero-sum vectors")
    }

    /// Length scale of z at which the gradients reach one nat.
    pub fn scale(&self) -> f64 {
        let max_norm = self.coeffs.iter().map(|a| dot(a, a).sqrt()).fold(0.0, f64::max);
        if max_norm > 0.0 {
            1.0 / max_norm
        } else {
            1.0
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
