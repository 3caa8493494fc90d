//! Locally low-rank machinery.
//!
//! Each column of an `M x N` matrix is a vectorized `m_x x m_y` frame, voxel
//! `(x, y)` stored at row `x * m_y + y`. A patch anchored at `p` covers
//! voxels `p + (i, j)` for `0 <= i < n_x`, `0 <= j < n_y`, vectorized as
//! `i * n_y + j`; stacking one patch across all frames gives its `P x N`
//! Casorati matrix. The anchors tile the grid exactly once. Overlap comes from
//! circular shifts `s` with `s_x in [-n_x/2 + 1, n_x/2]` and likewise for
//! `s_y`, so every voxel lands in exactly one patch per shift.
//!
//! The locally low-rank regularizer is
//! `sum_{s} sum_{p} R(P_p(S_s(X)))`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, re_inner, thin_svd, CMatrix};
use crate::linesearch::LineQuadratic;
use crate::spectral::{curvature_quadratic, Curvature, SpectralRegularizer};

pub type Shift = [i64; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct PatchGeometry {
    image: [usize; 2],
    patch: [usize; 2],
    locations: Vec<[usize; 2]>,
    shifts: Vec<Shift>,
}

impl PatchGeometry {
    /// Non-overlapping tiling of an `image` grid by even-sized patches, with
    /// the full shift set. Patch dims must be even and divide the image dims.
    pub fn new(image: [usize; 2], patch: [usize; 2]) -> Result<Self> {
        let [mx, my] = image;
        let [nx, ny] = patch;
        if mx == 0 || my == 0 {
            return Err(Error::InvalidGeometry("empty image".into()));
        }
        if nx == 0 || ny == 0 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGeometry(format!("patch {nx}x{ny} must have positive even dims")));
        }
        if mx % nx != 0 || my % ny != 0 {
            return Err(Error::InvalidGeometry(format!(
                "patch {nx}x{ny} does not divide image {mx}x{my}"
            )));
        }
        let locations = (0..mx / nx)
            .flat_map(|ix| (0..my / ny).map(move |iy| [ix * nx, iy * ny]))
            .collect();
        let half = |n: usize| (-(n as i64) / 2 + 1)..=(n as i64 / 2);
        let shifts = half(nx).flat_map(|sx| half(ny).map(move |sy| [sx, sy])).collect();
        Ok(Self { image, patch, locations, shifts })
    }

    /// One patch covering the whole image and no shifts: the locally low-rank
    /// regularizer collapses to a global one.
    pub fn global(image: [usize; 2]) -> Result<Self> {
        if image[0] == 0 || image[1] == 0 {
            return Err(Error::InvalidGeometry("empty image".into()));
        }
        Ok(Self { image, patch: image, locations: vec![[0, 0]], shifts: vec![[0, 0]] })
    }

    /// Replaces the shift set.
    pub fn with_shifts(mut self, shifts: Vec<Shift>) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::InvalidGeometry("empty shift set".into()));
        }
        self.shifts = shifts;
        Ok(self)
    }

    pub fn image(&self) -> [usize; 2] {
        self.image
    }

    pub fn patch(&self) -> [usize; 2] {
        self.patch
    }

    pub fn voxels(&self) -> usize {
        self.image[0] * self.image[1]
    }

    pub fn patch_len(&self) -> usize {
        self.patch[0] * self.patch[1]
    }

    pub fn locations(&self) -> &[[usize; 2]] {
        &self.locations
    }

    pub fn shifts(&self) -> &[Shift] {
        &self.shifts
    }

    /// Number of singular values of each Casorati matrix for `frames` frames.
    pub fn patch_rank(&self, frames: usize) -> usize {
        self.patch_len().min(frames)
    }

    fn check_location(&self, p: [usize; 2]) -> Result<()> {
        if self.locations.contains(&p) {
            Ok(())
        } else {
            Err(Error::LocationOutOfGrid(p))
        }
    }

    fn check_rows(&self, x: &CMatrix) -> Result<()> {
        if x.nrows() != self.voxels() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for a {}x{} image",
                x.nrows(),
                self.image[0],
                self.image[1]
            )));
        }
        Ok(())
    }

    /// Source row in `X` for each Casorati row of patch `p` taken from
    /// `S_s(X)`.
    fn patch_rows(&self, p: [usize; 2], s: Shift) -> Vec<usize> {
        let [mx, my] = self.image;
        let [nx, ny] = self.patch;
        let mut rows = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            let x = wrap(p[0] as i64 + i as i64 - s[0], mx);
            for j in 0..ny {
                let y = wrap(p[1] as i64 + j as i64 - s[1], my);
                rows.push(x * my + y);
            }
        }
        rows
    }

    fn pairs(&self) -> Vec<([usize; 2], Shift)> {
        self.shifts
            .iter()
            .flat_map(|s| self.locations.iter().map(move |p| (*p, *s)))
            .collect()
    }
}

fn wrap(v: i64, n: usize) -> usize {
    v.rem_euclid(n as i64) as usize
}

fn gather(x: &CMatrix, rows: &[usize]) -> CMatrix {
    let n = x.ncols();
    let mut out = CMatrix::zeros(rows.len(), n);
    for c in 0..n {
        let src = x.column(c);
        let mut dst = out.column_mut(c);
        for (k, r) in rows.iter().enumerate() {
            dst[k] = src[*r];
        }
    }
    out
}

fn scatter_add(acc: &mut CMatrix, c: &CMatrix, rows: &[usize]) {
    for col in 0..c.ncols() {
        let src = c.column(col);
        let mut dst = acc.column_mut(col);
        for (k, r) in rows.iter().enumerate() {
            dst[*r] += src[k];
        }
    }
}

/// `P_p(S_s(X))` without materializing the shifted matrix.
pub(crate) fn extract_shifted(x: &CMatrix, p: [usize; 2], s: Shift, geom: &PatchGeometry) -> CMatrix {
    gather(x, &geom.patch_rows(p, s))
}

/// `acc += S_s^*(P_p^*(C))`.
pub(crate) fn scatter_shifted_add(acc: &mut CMatrix, c: &CMatrix, p: [usize; 2], s: Shift, geom: &PatchGeometry) {
    scatter_add(acc, c, &geom.patch_rows(p, s))
}

/// Casorati matrix of patch `p`.
pub fn extract_patch(x: &CMatrix, p: [usize; 2], geom: &PatchGeometry) -> Result<CMatrix> {
    geom.check_location(p)?;
    geom.check_rows(x)?;
    Ok(extract_shifted(x, p, [0, 0], geom))
}

/// Adjoint of [`extract_patch`]: zero everywhere except patch `p`.
pub fn adjoint_patch(c: &CMatrix, p: [usize; 2], geom: &PatchGeometry) -> Result<CMatrix> {
    geom.check_location(p)?;
    if c.nrows() != geom.patch_len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows for a {}-voxel patch",
            c.nrows(),
            geom.patch_len()
        )));
    }
    let mut out = CMatrix::zeros(geom.voxels(), c.ncols());
    scatter_shifted_add(&mut out, c, p, [0, 0], geom);
    Ok(out)
}

/// Circular shift of every frame by `s`. The adjoint is `shift(-s)`.
pub fn shift(x: &CMatrix, s: Shift, geom: &PatchGeometry) -> Result<CMatrix> {
    geom.check_rows(x)?;
    let [mx, my] = geom.image;
    let mut out = CMatrix::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        for ix in 0..mx {
            let tx = wrap(ix as i64 + s[0], mx);
            for iy in 0..my {
                let ty = wrap(iy as i64 + s[1], my);
                out[(tx * my + ty, c)] = x[(ix * my + iy, c)];
            }
        }
    }
    Ok(out)
}

/// How per-patch contributions are summed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Terms are computed in parallel but summed in `(shift, location)`
    /// order, so results are bitwise reproducible.
    #[default]
    Ordered,
    /// Parallel tree reduction; the summation order depends on scheduling.
    Tree,
}

/// The locally low-rank regularizer for a fixed spectral regularizer and
/// patch geometry.
#[derive(Clone, Debug)]
pub struct LocalLowRank {
    reg: SpectralRegularizer,
    geom: PatchGeometry,
    reduction: Reduction,
}

impl LocalLowRank {
    pub fn new(reg: SpectralRegularizer, geom: PatchGeometry) -> Self {
        Self { reg, geom, reduction: Reduction::Ordered }
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn regularizer(&self) -> &SpectralRegularizer {
        &self.reg
    }

    pub fn geometry(&self) -> &PatchGeometry {
        &self.geom
    }

    fn sum_scalars<F>(&self, pairs: &[([usize; 2], Shift)], term: F) -> Result<LineQuadratic>
    where
        F: Fn([usize; 2], Shift) -> Result<LineQuadratic> + Sync,
    {
        let zero = LineQuadratic::zero(0.0);
        match self.reduction {
            Reduction::Ordered => {
                let terms: Vec<LineQuadratic> =
                    pairs.par_iter().map(|(p, s)| term(*p, *s)).collect::<Result<_>>()?;
                let mut acc = zero;
                for t in &terms {
                    acc.accumulate(t);
                }
                Ok(acc)
            }
            Reduction::Tree => pairs
                .par_iter()
                .map(|(p, s)| term(*p, *s))
                .try_reduce(
                    || zero,
                    |mut a, b| {
                        a.accumulate(&b);
                        Ok(a)
                    },
                ),
        }
    }

    pub fn value(&self, x: &CMatrix) -> Result<f64> {
        self.geom.check_rows(x)?;
        let q = self.sum_scalars(&self.geom.pairs(), |p, s| {
            let c = extract_shifted(x, p, s, &self.geom);
            Ok(LineQuadratic { c0: self.reg.value(&c)?, ..LineQuadratic::zero(0.0) })
        })?;
        Ok(q.c0)
    }

    pub fn grad(&self, x: &CMatrix) -> Result<CMatrix> {
        Ok(self.value_and_grad(x)?.1)
    }

    /// Value and gradient from a single SVD per Casorati matrix.
    pub fn value_and_grad(&self, x: &CMatrix) -> Result<(f64, CMatrix)> {
        self.geom.check_rows(x)?;
        let pairs = self.geom.pairs();
        let term = |(p, s): &([usize; 2], Shift)| -> Result<(f64, CMatrix)> {
            let c = extract_shifted(x, *p, *s, &self.geom);
            self.reg.value_and_grad(&c)
        };
        let shape = x.shape();
        match self.reduction {
            Reduction::Ordered => {
                let terms: Vec<(f64, CMatrix)> = pairs.par_iter().map(term).collect::<Result<_>>()?;
                let mut value = 0.0;
                let mut grad = CMatrix::zeros(shape.0, shape.1);
                for ((p, s), (v, g)) in pairs.iter().zip(&terms) {
                    value += v;
                    scatter_shifted_add(&mut grad, g, *p, *s, &self.geom);
                }
                Ok((value, grad))
            }
            Reduction::Tree => pairs
                .par_iter()
                .try_fold(
                    || (0.0, CMatrix::zeros(shape.0, shape.1)),
                    |(mut v, mut acc), ps| {
                        let (tv, tg) = term(ps)?;
                        v += tv;
                        scatter_shifted_add(&mut acc, &tg, ps.0, ps.1, &self.geom);
                        Ok((v, acc))
                    },
                )
                .try_reduce(
                    || (0.0, CMatrix::zeros(shape.0, shape.1)),
                    |(va, ga), (vb, gb)| Ok((va + vb, ga + gb)),
                ),
        }
    }

    fn line_term(
        &self,
        point: &CMatrix,
        dir: &CMatrix,
        p: [usize; 2],
        s: Shift,
        center: f64,
        mode: Curvature,
    ) -> Result<LineQuadratic> {
        let xp = extract_shifted(point, p, s, &self.geom);
        let dp = extract_shifted(dir, p, s, &self.geom);
        let f = thin_svd(&xp)?;
        let grad = f.compose(&self.reg.grad_diag(&f.sigma));
        let g = self.reg.curvature_weights(&f.sigma, mode)?;
        Ok(LineQuadratic {
            c0: self.reg.value_from_sigma(&f.sigma),
            c1: re_inner(&grad, &dp),
            c2: curvature_quadratic(&f, &dp, &g),
            center,
        })
    }

    fn line_point(&self, x: &CMatrix, dir: &CMatrix, center: f64) -> Result<CMatrix> {
        self.geom.check_rows(x)?;
        check_same_shape(x, dir, "line coefficients")?;
        Ok(if center == 0.0 { x.clone() } else { x + dir * Complex64::new(center, 0.0) })
    }

    /// Majorizer of `a -> value(X + a D)` at `center`, summing the per-patch
    /// majorizers over every `(location, shift)` pair.
    pub fn line_coeffs(&self, x: &CMatrix, dir: &CMatrix, center: f64, mode: Curvature) -> Result<LineQuadratic> {
        let point = self.line_point(x, dir, center)?;
        let q = self.sum_scalars(&self.geom.pairs(), |p, s| self.line_term(&point, dir, p, s, center, mode))?;
        Ok(LineQuadratic { center, ..q })
    }

    /// Approximate line coefficients from the single shift `sbar`, scaled by
    /// the number of shifts. Not guaranteed to majorize.
    pub fn line_coeffs_fast(
        &self,
        x: &CMatrix,
        dir: &CMatrix,
        center: f64,
        mode: Curvature,
        sbar: Shift,
    ) -> Result<LineQuadratic> {
        if !self.geom.shifts.contains(&sbar) {
            return Err(Error::InvalidGeometry(format!("shift {sbar:?} is not in the shift set")));
        }
        let point = self.line_point(x, dir, center)?;
        let pairs: Vec<_> = self.geom.locations.iter().map(|p| (*p, sbar)).collect();
        let q = self.sum_scalars(&pairs, |p, s| self.line_term(&point, dir, p, s, center, mode))?;
        Ok(LineQuadratic { center, ..q }.scaled(self.geom.shifts.len() as f64))
    }
}
