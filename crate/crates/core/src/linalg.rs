//! Dense complex matrix helpers and the singular value decomposition used
//! throughout the crate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix, column-major. Columns of a dynamic image series are
/// vectorized frames.
pub type CMatrix = DMatrix<Complex64>;

const SVD_MAX_ITER: usize = 2000;

/// `Re tr(A^H B)`, the real inner product on complex matrices.
pub fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frob_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frob(a: &CMatrix) -> f64 {
    frob_sq(a).sqrt()
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn check_same_shape(a: &CMatrix, b: &CMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Full singular value decomposition `X = U diag(sigma) V^H`.
///
/// `u` is `M x M`, `v` is `N x N`, and `sigma` holds the `min(M, N)`
/// singular values in nonincreasing order.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl SvdFactors {
    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    /// `U[:, :r] diag(d) V[:, :r]^H` for a length-`r` diagonal.
    pub fn compose(&self, diag: &[f64]) -> CMatrix {
        compose(&self.u, diag, &self.v)
    }
}

/// Economy SVD: `u` is `M x r`, `v` is `N x r`.
#[derive(Clone, Debug)]
pub(crate) struct ThinSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl ThinSvd {
    pub fn compose(&self, diag: &[f64]) -> CMatrix {
        compose(&self.u, diag, &self.v)
    }
}

fn compose(u: &CMatrix, diag: &[f64], v: &CMatrix) -> CMatrix {
    let r = diag.len();
    let mut us = u.columns(0, r).into_owned();
    for (k, d) in diag.iter().enumerate() {
        us.column_mut(k).scale_mut(*d);
    }
    us * v.columns(0, r).adjoint()
}

pub(crate) fn thin_svd(x: &CMatrix) -> Result<ThinSvd> {
    let (m, n) = x.shape();
    if !all_finite(x) {
        return Err(Error::NonFinite("SVD input".into()));
    }
    let svd = nalgebra::SVD::try_new(x.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::ConvergenceFailure { rows: m, cols: n })?;
    let u = svd.u.ok_or(Error::ConvergenceFailure { rows: m, cols: n })?;
    let v_t = svd.v_t.ok_or(Error::ConvergenceFailure { rows: m, cols: n })?;
    Ok(ThinSvd {
        u,
        sigma: svd.singular_values.iter().copied().collect(),
        v: v_t.adjoint(),
    })
}

/// Full SVD. The thin factors from the backend are completed to square
/// unitary matrices.
pub fn svd(x: &CMatrix) -> Result<SvdFactors> {
    let thin = thin_svd(x)?;
    let (m, n) = x.shape();
    Ok(SvdFactors {
        u: complete_basis(&thin.u, m),
        sigma: thin.sigma,
        v: complete_basis(&thin.v, n),
    })
}

/// Extends the orthonormal columns of `q` to an orthonormal basis of C^dim.
/// Candidates are the standard basis vectors; the one with the largest
/// residual after (twice repeated) Gram-Schmidt is taken at each step.
fn complete_basis(q: &CMatrix, dim: usize) -> CMatrix {
    let k = q.ncols();
    if k == dim {
        return q.clone();
    }
    let mut basis = CMatrix::zeros(dim, dim);
    basis.columns_mut(0, k).copy_from(q);
    let mut filled = k;
    while filled < dim {
        let mut best: Option<(f64, nalgebra::DVector<Complex64>)> = None;
        for i in 0..dim {
            let mut r = nalgebra::DVector::<Complex64>::zeros(dim);
            r[i] = Complex64::new(1.0, 0.0);
            for _ in 0..2 {
                for j in 0..filled {
                    let col = basis.column(j);
                    let c = col.dotc(&r);
                    r.axpy(-c, &col, Complex64::new(1.0, 0.0));
                }
            }
            let nrm = r.norm();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, r));
            }
        }
        let (nrm, r) = best.expect("dim > filled");
        basis.column_mut(filled).copy_from(&(r / Complex64::new(nrm, 0.0)));
        filled += 1;
    }
    basis
}

/// Matrix with i.i.d. standard complex Gaussian entries (unit variance per
/// real and imaginary part).
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-like random unitary from the QR factorization of a Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let qr = random_complex(rng, n, n).qr();
    let q = qr.q();
    let r = qr.r();
    // fix the phases so the distribution does not depend on the QR convention
    let mut out = q;
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            out[(i, j)] *= ph;
        }
    }
    out
}
