//! Forward operators, the data-consistency term and a synthetic dynamic
//! imaging problem generator.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, frob_sq, re_inner, CMatrix};
use crate::linesearch::LineQuadratic;

pub mod archive;

/// Linear map from `M x N` image series to `S x N` measurements.
pub trait LinearOperator: Send + Sync {
    /// `(M, N)`.
    fn input_shape(&self) -> (usize, usize);
    /// `S`.
    fn output_rows(&self) -> usize;
    fn apply(&self, x: &CMatrix) -> CMatrix;
    fn adjoint(&self, z: &CMatrix) -> CMatrix;
}

/// `A = I`: turns the data term into `1/2 |X - Y|^2`.
#[derive(Clone, Debug)]
pub struct IdentityOperator {
    shape: (usize, usize),
}

impl IdentityOperator {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { shape: (rows, cols) }
    }
}

impl LinearOperator for IdentityOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn output_rows(&self) -> usize {
        self.shape.0
    }

    fn apply(&self, x: &CMatrix) -> CMatrix {
        x.clone()
    }

    fn adjoint(&self, z: &CMatrix) -> CMatrix {
        z.clone()
    }
}

/// Unitary 2D DFT on frames stored with voxel `(x, y)` at `x * m_y + y`.
#[derive(Clone)]
pub struct Fft2 {
    image: [usize; 2],
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    scale: f64,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("image", &self.image).finish()
    }
}

impl Fft2 {
    pub fn new(image: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        let [mx, my] = image;
        Self {
            image,
            fwd: [planner.plan_fft_forward(mx), planner.plan_fft_forward(my)],
            inv: [planner.plan_fft_inverse(mx), planner.plan_fft_inverse(my)],
            scale: 1.0 / ((mx * my) as f64).sqrt(),
        }
    }

    fn run(&self, buf: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [mx, my] = self.image;
        // along y: rows are contiguous
        plans[1].process(buf);
        // along x: strided, go through a transposed copy
        let mut t = vec![Complex64::new(0.0, 0.0); mx * my];
        for x in 0..mx {
            for y in 0..my {
                t[y * mx + x] = buf[x * my + y];
            }
        }
        plans[0].process(&mut t);
        for x in 0..mx {
            for y in 0..my {
                buf[x * my + y] = t[y * mx + x] * self.scale;
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.inv);
    }
}

/// Multi-coil Cartesian acquisition: coil weighting, unitary 2D DFT and a
/// per-frame k-space mask. Output row `c * M + k` holds coil `c` at k-space
/// location `k` (same indexing as voxels); unsampled entries are zero.
#[derive(Clone, Debug)]
pub struct MriOperator {
    image: [usize; 2],
    frames: usize,
    /// `M x C` coil sensitivities.
    coils: CMatrix,
    /// `masks[n][k]`: location `k` sampled in frame `n`.
    masks: Vec<Vec<bool>>,
    fft: Fft2,
}

impl MriOperator {
    pub fn new(image: [usize; 2], coils: CMatrix, masks: Vec<Vec<bool>>) -> Result<Self> {
        let m = image[0] * image[1];
        if m == 0 {
            return Err(Error::InvalidParameter("empty image".into()));
        }
        if coils.nrows() != m || coils.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "coil maps are {:?}, expected {m} x C",
                coils.shape()
            )));
        }
        if masks.is_empty() || masks.iter().any(|mk| mk.len() != m) {
            return Err(Error::DimensionMismatch("masks must be N frames of M entries".into()));
        }
        Ok(Self { image, frames: masks.len(), coils, masks, fft: Fft2::new(image) })
    }

    /// Same coils, every location sampled in every frame.
    pub fn fully_sampled(&self) -> Self {
        let m = self.voxels();
        Self { masks: vec![vec![true; m]; self.frames], ..self.clone() }
    }

    pub fn image(&self) -> [usize; 2] {
        self.image
    }

    pub fn voxels(&self) -> usize {
        self.image[0] * self.image[1]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coil_count(&self) -> usize {
        self.coils.ncols()
    }

    pub fn coils(&self) -> &CMatrix {
        &self.coils
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    /// Fraction of k-space locations sampled, averaged over frames.
    pub fn sampling_fraction(&self) -> f64 {
        let total: usize = self.masks.iter().map(|mk| mk.iter().filter(|b| **b).count()).sum();
        total as f64 / (self.voxels() * self.frames) as f64
    }

    fn forward_frame(&self, frame: &[Complex64], n: usize) -> Vec<Complex64> {
        let m = self.voxels();
        let mut out = vec![Complex64::new(0.0, 0.0); m * self.coil_count()];
        for (c, chunk) in out.chunks_mut(m).enumerate() {
            let coil = self.coils.column(c);
            for k in 0..m {
                chunk[k] = frame[k] * coil[k];
            }
            self.fft.forward(chunk);
            for (k, z) in chunk.iter_mut().enumerate() {
                if !self.masks[n][k] {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    fn adjoint_frame(&self, data: &[Complex64], n: usize) -> Vec<Complex64> {
        let m = self.voxels();
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for c in 0..self.coil_count() {
            for k in 0..m {
                buf[k] = if self.masks[n][k] { data[c * m + k] } else { Complex64::new(0.0, 0.0) };
            }
            self.fft.inverse(&mut buf);
            let coil = self.coils.column(c);
            for k in 0..m {
                out[k] += coil[k].conj() * buf[k];
            }
        }
        out
    }
}

fn columns_to_matrix(rows: usize, cols: Vec<Vec<Complex64>>) -> CMatrix {
    let n = cols.len();
    CMatrix::from_iterator(rows, n, cols.into_iter().flatten())
}

impl LinearOperator for MriOperator {
    fn input_shape(&self) -> (usize, usize) {
        (self.voxels(), self.frames)
    }

    fn output_rows(&self) -> usize {
        self.voxels() * self.coil_count()
    }

    fn apply(&self, x: &CMatrix) -> CMatrix {
        assert_eq!(x.shape(), self.input_shape(), "MriOperator::apply input shape");
        let cols: Vec<Vec<Complex64>> = (0..self.frames)
            .into_par_iter()
            .map(|n| self.forward_frame(x.column(n).as_slice(), n))
            .collect();
        columns_to_matrix(self.output_rows(), cols)
    }

    fn adjoint(&self, z: &CMatrix) -> CMatrix {
        assert_eq!(z.shape(), (self.output_rows(), self.frames), "MriOperator::adjoint input shape");
        let cols: Vec<Vec<Complex64>> = (0..self.frames)
            .into_par_iter()
            .map(|n| self.adjoint_frame(z.column(n).as_slice(), n))
            .collect();
        columns_to_matrix(self.voxels(), cols)
    }
}

/// Data `Y` for an operator, with the ground truth when it is known.
#[derive(Clone, Debug)]
pub struct ReconstructionProblem<A: LinearOperator> {
    pub operator: A,
    pub data: CMatrix,
    pub truth: Option<CMatrix>,
}

/// `A(X + a D) - Y = r0 + a ad`, cached for repeated line evaluations.
#[derive(Clone, Debug)]
pub struct DataLine {
    r0: CMatrix,
    ad: CMatrix,
}

impl DataLine {
    /// Exact quadratic of `a -> f(X + a D)` at `center`.
    pub fn coeffs(&self, center: f64) -> LineQuadratic {
        let r = &self.r0 + &self.ad * Complex64::new(center, 0.0);
        LineQuadratic {
            c0: 0.5 * frob_sq(&r),
            c1: re_inner(&r, &self.ad),
            c2: frob_sq(&self.ad),
            center,
        }
    }
}

impl<A: LinearOperator> ReconstructionProblem<A> {
    pub fn new(operator: A, data: CMatrix, truth: Option<CMatrix>) -> Result<Self> {
        let (m, n) = operator.input_shape();
        if data.shape() != (operator.output_rows(), n) {
            return Err(Error::DimensionMismatch(format!(
                "data is {:?}, operator produces {:?}",
                data.shape(),
                (operator.output_rows(), n)
            )));
        }
        if let Some(t) = &truth {
            if t.shape() != (m, n) {
                return Err(Error::DimensionMismatch(format!("truth is {:?}, expected {:?}", t.shape(), (m, n))));
            }
        }
        Ok(Self { operator, data, truth })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.operator.input_shape()
    }

    fn check(&self, x: &CMatrix) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::DimensionMismatch(format!("X is {:?}, expected {:?}", x.shape(), self.shape())));
        }
        Ok(())
    }

    fn residual(&self, x: &CMatrix) -> Result<CMatrix> {
        self.check(x)?;
        Ok(self.operator.apply(x) - &self.data)
    }

    /// `1/2 |A(X) - Y|^2`.
    pub fn f_value(&self, x: &CMatrix) -> Result<f64> {
        Ok(0.5 * frob_sq(&self.residual(x)?))
    }

    /// `A^*(A(X) - Y)`.
    pub fn f_grad(&self, x: &CMatrix) -> Result<CMatrix> {
        Ok(self.f_value_and_grad(x)?.1)
    }

    pub fn f_value_and_grad(&self, x: &CMatrix) -> Result<(f64, CMatrix)> {
        let r = self.residual(x)?;
        Ok((0.5 * frob_sq(&r), self.operator.adjoint(&r)))
    }

    pub fn data_line(&self, x: &CMatrix, dir: &CMatrix) -> Result<DataLine> {
        check_same_shape(x, dir, "data line")?;
        Ok(DataLine { r0: self.residual(x)?, ad: self.operator.apply(dir) })
    }

    /// Exact quadratic of `a -> f(X + a D)` at `center`.
    pub fn f_line_coeffs(&self, x: &CMatrix, dir: &CMatrix, center: f64) -> Result<LineQuadratic> {
        Ok(self.data_line(x, dir)?.coeffs(center))
    }
}

impl ReconstructionProblem<MriOperator> {
    /// Data-sharing initialization: each unsampled k-space entry is copied
    /// from the temporally nearest frame that sampled it (earlier frame on
    /// ties), then the filled data is coil-combined with the fully sampled
    /// adjoint.
    pub fn datashare_init(&self) -> Result<CMatrix> {
        let op = &self.operator;
        let (m, frames) = (op.voxels(), op.frames());
        let masks = op.masks();
        let mut source = vec![vec![0usize; m]; frames];
        for k in 0..m {
            let sampled: Vec<usize> = (0..frames).filter(|n| masks[*n][k]).collect();
            if sampled.is_empty() {
                return Err(Error::InfeasibleMask(format!("k-space location {k} is never sampled")));
            }
            for (n, src) in source.iter_mut().enumerate() {
                // min_by_key keeps the first minimum, i.e. the earlier frame
                src[k] = *sampled.iter().min_by_key(|f| f.abs_diff(n)).unwrap();
            }
        }
        let filled = CMatrix::from_fn(op.output_rows(), frames, |row, n| {
            let k = row % m;
            self.data[(row, source[n][k])]
        });
        Ok(op.fully_sampled().adjoint(&filled))
    }
}

/// Parameters of a synthetic dynamic imaging problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub image: [usize; 2],
    pub frames: usize,
    pub coils: usize,
    pub rank: usize,
    pub acceleration: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image: [32, 32],
            frames: 8,
            coils: 4,
            rank: 3,
            acceleration: 4.0,
            noise_sigma: 0.01,
        }
    }
}

/// Signed DFT frequency of index `i` on an `n`-point grid.
fn freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

fn smooth_field(rng: &mut ChaCha8Rng, fft: &Fft2, image: [usize; 2], cutoff: f64) -> Vec<Complex64> {
    let [mx, my] = image;
    let mut buf = vec![Complex64::new(0.0, 0.0); mx * my];
    for x in 0..mx {
        for y in 0..my {
            let r2 = freq(x, mx).powi(2) + freq(y, my).powi(2);
            if r2 <= cutoff * cutoff {
                let amp = (-r2 / (cutoff * cutoff)).exp();
                buf[x * my + y] = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * amp;
            }
        }
    }
    fft.inverse(&mut buf);
    let peak = buf.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    buf.iter().map(|z| z / peak).collect()
}

fn make_truth(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, fft: &Fft2) -> CMatrix {
    let m = cfg.image[0] * cfg.image[1];
    let n = cfg.frames;
    let mut truth = CMatrix::zeros(m, n);
    for j in 0..cfg.rank {
        let spatial = smooth_field(rng, fft, cfg.image, 4.0);
        // mode 0 is a static background, the others fluctuate in time
        let amp = if j == 0 { 1.0 } else { 0.5 / j as f64 };
        let f0: f64 = rng.random_range(0.5..2.0);
        let ph: f64 = rng.random_range(0.0..2.0 * PI);
        let temporal: Vec<Complex64> = (0..n)
            .map(|t| {
                let v = if j == 0 {
                    1.0
                } else {
                    (2.0 * PI * f0 * t as f64 / n as f64 + ph).cos()
                };
                Complex64::new(amp * v, 0.0)
            })
            .collect();
        for t in 0..n {
            for k in 0..m {
                truth[(k, t)] += spatial[k] * temporal[t];
            }
        }
    }
    truth
}

fn make_coils(rng: &mut ChaCha8Rng, image: [usize; 2], count: usize) -> CMatrix {
    let [mx, my] = image;
    let (cx, cy) = (mx as f64 / 2.0, my as f64 / 2.0);
    let radius = 0.75 * cx.max(cy);
    let width = 0.6 * cx.max(cy);
    let mut coils = CMatrix::zeros(mx * my, count);
    for c in 0..count {
        let ang = 2.0 * PI * c as f64 / count as f64 + rng.random_range(-0.2..0.2);
        let (px, py) = (cx + radius * ang.cos(), cy + radius * ang.sin());
        let (gx, gy): (f64, f64) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        for x in 0..mx {
            for y in 0..my {
                let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                let phase = gx * x as f64 + gy * y as f64;
                coils[(x * my + y, c)] = Complex64::from_polar(mag, phase);
            }
        }
    }
    for k in 0..mx * my {
        let norm = coils.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for c in 0..count {
            coils[(k, c)] /= norm;
        }
    }
    coils
}

/// Variable-density random masks with a fully sampled center; every
/// location is sampled in at least one frame.
fn make_masks(rng: &mut ChaCha8Rng, image: [usize; 2], frames: usize, acceleration: f64) -> Result<Vec<Vec<bool>>> {
    if !(acceleration >= 1.0) {
        return Err(Error::InfeasibleMask(format!("acceleration {acceleration} < 1")));
    }
    if acceleration > frames as f64 {
        return Err(Error::InfeasibleMask(format!(
            "acceleration {acceleration} with {frames} frames cannot cover k-space"
        )));
    }
    let [mx, my] = image;
    let m = mx * my;
    let rmax = ((mx / 2).pow(2) as f64 + (my / 2).pow(2) as f64).sqrt().max(1.0);
    let center = 0.08 * rmax;
    let mut density = vec![0.0; m];
    let mut is_center = vec![false; m];
    for x in 0..mx {
        for y in 0..my {
            let r = (freq(x, mx).powi(2) + freq(y, my).powi(2)).sqrt();
            is_center[x * my + y] = r <= center;
            density[x * my + y] = (1.0 - r / rmax).max(0.0).powi(2) + 0.05;
        }
    }
    let target = m as f64 / acceleration;
    let expected = |scale: f64| -> f64 {
        (0..m).map(|k| if is_center[k] { 1.0 } else { (scale * density[k]).min(1.0) }).sum()
    };
    let (mut lo, mut hi) = (0.0, 1e6);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let prob: Vec<f64> = (0..m).map(|k| if is_center[k] { 1.0 } else { (lo * density[k]).min(1.0) }).collect();
    let mut masks: Vec<Vec<bool>> = (0..frames)
        .map(|_| prob.iter().map(|p| rng.random::<f64>() < *p).collect())
        .collect();
    for k in 0..m {
        if !masks.iter().any(|mk| mk[k]) {
            let n = rng.random_range(0..frames);
            masks[n][k] = true;
        }
    }
    Ok(masks)
}

/// Deterministic synthetic problem: a globally rank-`rank` image series,
/// smooth coil maps with `sum_c |c|^2 = 1`, variable-density masks and
/// complex white Gaussian noise with `E|e|^2 = noise_sigma^2` on the sampled
/// entries.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<ReconstructionProblem<MriOperator>> {
    if cfg.image[0] == 0 || cfg.image[1] == 0 || cfg.frames == 0 || cfg.coils == 0 || cfg.rank == 0 {
        return Err(Error::InvalidParameter("image, frames, coils and rank must be positive".into()));
    }
    if !(cfg.noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fft = Fft2::new(cfg.image);
    let truth = make_truth(&mut rng, cfg, &fft);
    let coils = make_coils(&mut rng, cfg.image, cfg.coils);
    let masks = make_masks(&mut rng, cfg.image, cfg.frames, cfg.acceleration)?;
    let op = MriOperator::new(cfg.image, coils, masks)?;
    let mut data = op.apply(&truth);
    if cfg.noise_sigma > 0.0 {
        let s = cfg.noise_sigma / 2f64.sqrt();
        let m = op.voxels();
        for n in 0..cfg.frames {
            for row in 0..op.output_rows() {
                if op.masks()[n][row % m] {
                    let e = Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
                    data[(row, n)] += e * s;
                }
            }
        }
    }
    ReconstructionProblem::new(op, data, Some(truth))
}
