//! On-disk problem archives.
//!
//! A problem archive is a directory holding:
//!
//! - `meta`: `key = value` lines (`mx`, `my`, `frames`, `coils`, `rank`,
//!   `seed`, `sigma`, `acceleration`);
//! - `truth`, `coils`, `kspace`: complex arrays;
//! - `masks`: one byte (0 or 1) per k-space location and frame.
//!
//! Arrays start with a 16-byte header: a 4-byte magic (`CMPX` for complex
//! arrays, `MASK` for masks) followed by little-endian `u32` rows, cols and
//! depth. The payload is depth-major, each slice row-major. Complex entries
//! are little-endian `f64` pairs (real, imag).
//!
//! Layouts: `truth` is voxels x frames x 1, `coils` is voxels x coils x 1,
//! `kspace` is locations x frames x coils and `masks` is locations x frames
//! x 1.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{LinearOperator, MriOperator, ReconstructionProblem, SyntheticConfig};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

pub const COMPLEX_MAGIC: &[u8; 4] = b"CMPX";
pub const MASK_MAGIC: &[u8; 4] = b"MASK";

/// A 3-D complex array in archive order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexArray {
    pub rows: usize,
    pub cols: usize,
    pub depth: usize,
    pub data: Vec<Complex64>,
}

impl ComplexArray {
    fn index(&self, r: usize, c: usize, d: usize) -> usize {
        (d * self.rows + r) * self.cols + c
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        Self::from_slices(std::slice::from_ref(m))
    }

    /// Stacks equally shaped matrices along depth.
    pub fn from_slices(slices: &[CMatrix]) -> Self {
        let (rows, cols) = slices.first().map_or((0, 0), |m| m.shape());
        let mut data = Vec::with_capacity(rows * cols * slices.len());
        for m in slices {
            assert_eq!(m.shape(), (rows, cols), "slices must share a shape");
            for r in 0..rows {
                for c in 0..cols {
                    data.push(m[(r, c)]);
                }
            }
        }
        Self { rows, cols, depth: slices.len(), data }
    }

    pub fn slice(&self, d: usize) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |r, c| self.data[self.index(r, c, d)])
    }
}

fn header(magic: &[u8; 4], rows: usize, cols: usize, depth: usize) -> Result<Vec<u8>> {
    let mut h = Vec::with_capacity(16);
    h.extend_from_slice(magic);
    for v in [rows, cols, depth] {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))?;
        h.extend_from_slice(&v.to_le_bytes());
    }
    Ok(h)
}

fn parse_header(bytes: &[u8], magic: &[u8; 4]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 16 {
        return Err(Error::Format("file shorter than header".into()));
    }
    if &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    Ok((u(4), u(8), u(12)))
}

pub fn write_complex(path: &Path, a: &ComplexArray) -> Result<()> {
    let mut out = header(COMPLEX_MAGIC, a.rows, a.cols, a.depth)?;
    out.reserve(a.data.len() * 16);
    for z in &a.data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_complex(path: &Path) -> Result<ComplexArray> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (rows, cols, depth) = parse_header(&bytes, COMPLEX_MAGIC)?;
    let n = rows * cols * depth;
    if bytes.len() != 16 + 16 * n {
        return Err(Error::Format(format!("{}: expected {} payload bytes", path.display(), 16 * n)));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let data = (0..n).map(|k| Complex64::new(f(16 + 16 * k), f(24 + 16 * k))).collect();
    Ok(ComplexArray { rows, cols, depth, data })
}

pub fn write_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    write_complex(path, &ComplexArray::from_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    let a = read_complex(path)?;
    if a.depth != 1 {
        return Err(Error::Format(format!("{}: expected depth 1, got {}", path.display(), a.depth)));
    }
    Ok(a.slice(0))
}

fn write_masks(path: &Path, masks: &[Vec<bool>]) -> Result<()> {
    let frames = masks.len();
    let m = masks.first().map_or(0, Vec::len);
    let mut out = header(MASK_MAGIC, m, frames, 1)?;
    for k in 0..m {
        for mk in masks {
            out.push(u8::from(mk[k]));
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

fn read_masks(path: &Path) -> Result<Vec<Vec<bool>>> {
    let bytes = fs::read(path)?;
    let (m, frames, depth) = parse_header(&bytes, MASK_MAGIC)?;
    if depth != 1 || bytes.len() != 16 + m * frames {
        return Err(Error::Format(format!("{}: inconsistent mask size", path.display())));
    }
    let mut masks = vec![vec![false; m]; frames];
    for k in 0..m {
        for (n, mk) in masks.iter_mut().enumerate() {
            mk[k] = match bytes[16 + k * frames + n] {
                0 => false,
                1 => true,
                b => return Err(Error::Format(format!("mask byte {b} is not 0 or 1"))),
            };
        }
    }
    Ok(masks)
}

fn write_meta(path: &Path, meta: &SyntheticConfig) -> Result<()> {
    let text = format!(
        "mx = {}\nmy = {}\nframes = {}\ncoils = {}\nrank = {}\nseed = {}\nsigma = {:?}\nacceleration = {:?}\n",
        meta.image[0], meta.image[1], meta.frames, meta.coils, meta.rank, meta.seed, meta.noise_sigma, meta.acceleration
    );
    fs::write(path, text)?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<SyntheticConfig> {
    let text = fs::read_to_string(path)?;
    let mut kv = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("meta line '{line}' is not key = value")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
        kv.get(key)
            .ok_or_else(|| Error::Format(format!("meta is missing '{key}'")))?
            .parse()
            .map_err(|_| Error::Format(format!("meta value for '{key}' does not parse")))
    }
    Ok(SyntheticConfig {
        image: [get(&kv, "mx")?, get(&kv, "my")?],
        frames: get(&kv, "frames")?,
        coils: get(&kv, "coils")?,
        rank: get(&kv, "rank")?,
        seed: get(&kv, "seed")?,
        noise_sigma: get(&kv, "sigma")?,
        acceleration: get(&kv, "acceleration")?,
    })
}

/// Writes `problem` to `dir`, creating it if needed.
pub fn save_problem(dir: &Path, problem: &ReconstructionProblem<MriOperator>, meta: &SyntheticConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let op = &problem.operator;
    if meta.image != op.image() || meta.frames != op.frames() || meta.coils != op.coil_count() {
        return Err(Error::DimensionMismatch("meta does not describe the problem".into()));
    }
    write_meta(&dir.join("meta"), meta)?;
    if let Some(t) = &problem.truth {
        write_matrix(&dir.join("truth"), t)?;
    }
    write_matrix(&dir.join("coils"), op.coils())?;
    write_masks(&dir.join("masks"), op.masks())?;
    let m = op.voxels();
    let slices: Vec<CMatrix> = (0..op.coil_count())
        .map(|c| problem.data.rows(c * m, m).into_owned())
        .collect();
    write_complex(&dir.join("kspace"), &ComplexArray::from_slices(&slices))?;
    Ok(())
}

pub fn load_problem(dir: &Path) -> Result<(ReconstructionProblem<MriOperator>, SyntheticConfig)> {
    let meta = read_meta(&dir.join("meta"))?;
    let coils = read_matrix(&dir.join("coils"))?;
    let masks = read_masks(&dir.join("masks"))?;
    let op = MriOperator::new(meta.image, coils, masks)?;
    let k = read_complex(&dir.join("kspace"))?;
    let m = op.voxels();
    if (k.rows, k.cols, k.depth) != (m, op.frames(), op.coil_count()) {
        return Err(Error::Format(format!(
            "kspace is {}x{}x{}, expected {}x{}x{}",
            k.rows,
            k.cols,
            k.depth,
            m,
            op.frames(),
            op.coil_count()
        )));
    }
    let data = CMatrix::from_fn(op.output_rows(), op.frames(), |row, n| k.data[k.index(row % m, n, row / m)]);
    let truth_path = dir.join("truth");
    let truth = if truth_path.exists() { Some(read_matrix(&truth_path)?) } else { None };
    Ok((ReconstructionProblem::new(op, data, truth)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_synthetic;

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let m = CMatrix::from_fn(2, 3, |r, c| Complex64::new(r as f64, c as f64));
        let path = dir.path().join("x");
        write_matrix(&path, &m).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"CMPX");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 3, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 16);
        // row-major: second entry is (0, 1) = 0 + 1i
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.0);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), 1.0);
        assert_eq!(read_matrix(&path).unwrap(), m);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        fs::write(&path, b"NOPE\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_complex(&path), Err(Error::Format(_))));
    }

    #[test]
    fn problem_round_trip() {
        let cfg = SyntheticConfig { image: [8, 8], frames: 4, coils: 2, rank: 2, acceleration: 2.0, ..Default::default() };
        let p = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_problem(dir.path(), &p, &cfg).unwrap();
        let (q, meta) = load_problem(dir.path()).unwrap();
        assert_eq!(meta, cfg);
        assert_eq!(q.data, p.data);
        assert_eq!(q.truth, p.truth);
        assert_eq!(q.operator.masks(), p.operator.masks());
        assert_eq!(q.operator.coils(), p.operator.coils());
    }
}
