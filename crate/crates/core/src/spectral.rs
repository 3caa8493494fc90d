//! Huber-based low-rank regularizers on complex matrices.
//!
//! `R(X) = sum_k w_k phi(sigma_k(X))` with `w = 1` for the plain regularizer,
//! an arbitrary nonnegative `w` for the weighted one, and the tail weights
//! `(0, .., 0, 1, .., 1)` (first `K` zero) for the tail regularizer.
//!
//! The gradient is `U diag(w .* phi'(sigma)) V^H`. For the plain regularizer
//! this is well defined even at repeated singular values. For weighted
//! regularizers it is only a gradient where the singular values are distinct;
//! at exact ties the value computed from whatever factors the SVD returns is
//! used as is.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, re_inner, svd, thin_svd, CMatrix, SvdFactors, ThinSvd};
use crate::potentials::Potential;

/// Curvature operator used to build quadratic majorizers.
///
/// `GR` depends on the singular values at the expansion point and is the
/// tighter of the two; `GL` is the constant `omega(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Curvature {
    GR,
    GL,
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Curvature::GR => "GR",
            Curvature::GL => "GL",
        })
    }
}

impl FromStr for Curvature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GR" => Ok(Curvature::GR),
            "GL" => Ok(Curvature::GL),
            other => Err(Error::InvalidParameter(format!("unknown curvature mode '{other}'"))),
        }
    }
}

/// Tail weights: zero for the first `k` indices, one afterwards.
pub fn tail_weights(r: usize, k: usize) -> Result<Vec<f64>> {
    if r == 0 || k >= r {
        return Err(Error::KOutOfRange { k, r });
    }
    Ok((0..r).map(|i| if i < k { 0.0 } else { 1.0 }).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralRegularizer {
    potential: Potential,
    weights: Option<Vec<f64>>,
}

impl SpectralRegularizer {
    pub fn plain(potential: Potential) -> Self {
        Self { potential, weights: None }
    }

    /// Weighted regularizer. Weights must be finite, nonnegative and not all
    /// zero; their length must equal `min(M, N)` of the matrices it is applied
    /// to (checked at use).
    pub fn weighted(potential: Potential, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidWeights("weights are all zero".into()));
        }
        Ok(Self { potential, weights: Some(weights) })
    }

    pub fn tail(potential: Potential, r: usize, k: usize) -> Result<Self> {
        Self::weighted(potential, tail_weights(r, k)?)
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn check_rank(&self, r: usize) -> Result<()> {
        match &self.weights {
            Some(w) if w.len() != r => Err(Error::DimensionMismatch(format!(
                "{} weights for a matrix with {r} singular values",
                w.len()
            ))),
            _ => Ok(()),
        }
    }

    fn w(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn value_from_sigma(&self, sigma: &[f64]) -> f64 {
        sigma
            .iter()
            .enumerate()
            .map(|(k, s)| self.w(k) * self.potential.eval(*s))
            .sum()
    }

    /// `w .* phi'(sigma)`: the diagonal of the gradient in the singular basis.
    pub fn grad_diag(&self, sigma: &[f64]) -> Vec<f64> {
        sigma
            .iter()
            .enumerate()
            .map(|(k, s)| self.w(k) * self.potential.deriv(*s))
            .collect()
    }

    pub fn value(&self, x: &CMatrix) -> Result<f64> {
        let f = thin_svd(x)?;
        self.check_rank(f.sigma.len())?;
        Ok(self.value_from_sigma(&f.sigma))
    }

    pub fn grad(&self, x: &CMatrix) -> Result<CMatrix> {
        Ok(self.value_and_grad(x)?.1)
    }

    pub fn value_and_grad(&self, x: &CMatrix) -> Result<(f64, CMatrix)> {
        let f = thin_svd(x)?;
        self.check_rank(f.sigma.len())?;
        Ok((self.value_from_sigma(&f.sigma), f.compose(&self.grad_diag(&f.sigma))))
    }

    /// Gradient from precomputed full factors.
    pub fn grad_from_factors(&self, f: &SvdFactors) -> Result<CMatrix> {
        self.check_rank(f.sigma.len())?;
        Ok(f.compose(&self.grad_diag(&f.sigma)))
    }

    /// Convex iff the potential is convex and the weights are nonincreasing.
    pub fn is_convex(&self) -> bool {
        self.potential.is_convex()
            && self
                .weights
                .as_ref()
                .is_none_or(|w| w.windows(2).all(|p| p[0] >= p[1]))
    }

    /// `||w||_inf omega(0)`. This is the gradient's Lipschitz constant for the
    /// plain regularizer. With unequal weights the gradient is discontinuous
    /// where weighted singular values tie, so it only holds away from ties.
    pub fn lipschitz_bound(&self) -> f64 {
        let wmax = self
            .weights
            .as_ref()
            .map_or(1.0, |w| w.iter().copied().fold(0.0, f64::max));
        wmax * self.potential.weight_at_zero()
    }

    /// Per-singular-index curvature `g_k`: `w_k omega(sigma_k)` for GR and
    /// `w_k omega(0)` for GL. The majorizers are only valid for weighted
    /// regularizers with nondecreasing weights.
    pub fn curvature_weights(&self, sigma: &[f64], mode: Curvature) -> Result<Vec<f64>> {
        self.check_rank(sigma.len())?;
        if let Some(w) = &self.weights {
            if w.windows(2).any(|p| p[0] > p[1]) {
                return Err(Error::WeightsNotNondecreasing);
            }
        }
        let w0 = self.potential.weight_at_zero();
        Ok(sigma
            .iter()
            .enumerate()
            .map(|(k, s)| {
                self.w(k)
                    * match mode {
                        Curvature::GR => self.potential.weight(*s),
                        Curvature::GL => w0,
                    }
            })
            .collect())
    }

    /// The `M x N` curvature matrix. Wide and square matrices replicate `g_k`
    /// along rows, tall matrices along columns.
    pub fn curvature_matrix(&self, f: &SvdFactors, mode: Curvature) -> Result<DMatrix<f64>> {
        let g = self.curvature_weights(&f.sigma, mode)?;
        let (m, n) = (f.rows(), f.cols());
        Ok(if m <= n {
            DMatrix::from_fn(m, n, |k, _| g[k])
        } else {
            DMatrix::from_fn(m, n, |_, l| g[l])
        })
    }

    /// Quadratic majorizer `Q(X; S)` of the regularizer expanded at `S`.
    pub fn majorizer_value(&self, x: &CMatrix, s: &CMatrix, mode: Curvature) -> Result<f64> {
        check_same_shape(x, s, "majorizer")?;
        let f = svd(s)?;
        let g = self.curvature_matrix(&f, mode)?;
        let grad = self.grad_from_factors(&f)?;
        let d = x - s;
        let t = f.u.adjoint() * &d * &f.v;
        let quad: f64 = g.iter().zip(t.iter()).map(|(gk, z)| gk * z.norm_sqr()).sum();
        Ok(self.value_from_sigma(&f.sigma) + re_inner(&grad, &d) + 0.5 * quad)
    }
}

/// `sum_{k,l} G_kl |U^H D V|_kl^2` evaluated with economy factors. For
/// row-constant `G` (wide) this is `sum_k g_k |u_k^H D|^2`, for column-constant
/// `G` (tall) it is `sum_l g_l |D v_l|^2`; the remaining unitary factor drops
/// out of the row or column norms.
pub(crate) fn curvature_quadratic(f: &ThinSvd, d: &CMatrix, g: &[f64]) -> f64 {
    let (m, n) = d.shape();
    if m <= n {
        let t = f.u.adjoint() * d;
        t.row_iter()
            .zip(g)
            .map(|(row, gk)| gk * row.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    } else {
        let t = d * &f.v;
        t.column_iter()
            .zip(g)
            .map(|(col, gl)| gl * col.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}
