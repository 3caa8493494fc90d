//! Quadratic majorizers of 1D line-search functions and the
//! majorize-minimize step-size iteration.

use crate::error::{Error, Result};
use crate::linalg::{check_same_shape, re_inner, thin_svd, CMatrix};
use crate::spectral::{curvature_quadratic, Curvature, SpectralRegularizer};

/// `g(a) = c0 + c1 (a - center) + c2/2 (a - center)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineQuadratic {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub center: f64,
}

impl LineQuadratic {
    pub fn zero(center: f64) -> Self {
        Self { c0: 0.0, c1: 0.0, c2: 0.0, center }
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        let d = alpha - self.center;
        self.c0 + self.c1 * d + 0.5 * self.c2 * d * d
    }

    /// `center - c1/c2`, or `None` when the quadratic has no curvature.
    pub fn minimizer(&self) -> Option<f64> {
        (self.c2 > 0.0).then(|| self.center - self.c1 / self.c2)
    }

    /// Componentwise sum; the centers must agree.
    pub fn add_scaled(&self, other: &LineQuadratic, scale: f64) -> Result<LineQuadratic> {
        if self.center != other.center {
            return Err(Error::CenterMismatch(self.center, other.center));
        }
        Ok(LineQuadratic {
            c0: self.c0 + scale * other.c0,
            c1: self.c1 + scale * other.c1,
            c2: self.c2 + scale * other.c2,
            center: self.center,
        })
    }

    pub fn scaled(&self, s: f64) -> LineQuadratic {
        LineQuadratic { c0: s * self.c0, c1: s * self.c1, c2: s * self.c2, center: self.center }
    }

    pub(crate) fn accumulate(&mut self, other: &LineQuadratic) {
        self.c0 += other.c0;
        self.c1 += other.c1;
        self.c2 += other.c2;
    }
}

/// Majorizer of `a -> R(X + a D)` expanded at `center`.
pub fn reg_line_coeffs(
    reg: &SpectralRegularizer,
    x: &CMatrix,
    dir: &CMatrix,
    center: f64,
    mode: Curvature,
) -> Result<LineQuadratic> {
    check_same_shape(x, dir, "line coefficients")?;
    let point = if center == 0.0 { x.clone() } else { x + dir * num_complex::Complex64::new(center, 0.0) };
    let f = thin_svd(&point)?;
    let grad = f.compose(&reg.grad_diag(&f.sigma));
    let g = reg.curvature_weights(&f.sigma, mode)?;
    Ok(LineQuadratic {
        c0: reg.value_from_sigma(&f.sigma),
        c1: re_inner(&grad, dir),
        c2: curvature_quadratic(&f, dir, &g),
        center,
    })
}

/// `q_f + lambda q_reg`.
pub fn combine_line_coeffs(qf: &LineQuadratic, qreg: &LineQuadratic, lambda: f64) -> Result<LineQuadratic> {
    qf.add_scaled(qreg, lambda)
}

/// Runs `n_alpha` majorize-minimize steps `a <- a - c1(a)/c2(a)` from
/// `alpha0`. Stops early (returning the current step) when the majorizer is
/// flat along the line.
pub fn mm_step<F>(mut coeffs: F, alpha0: f64, n_alpha: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<LineQuadratic>,
{
    let mut alpha = alpha0;
    for _ in 0..n_alpha {
        let q = coeffs(alpha)?;
        let Some(next) = q.minimizer() else {
            return Ok(alpha);
        };
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("MM step (c1={}, c2={})", q.c1, q.c2)));
        }
        alpha = next;
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob_sq, random_complex};
    use crate::potentials::Potential;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(a: f64) -> Complex64 {
        Complex64::new(a, 0.0)
    }

    #[test]
    fn zero_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_complex(&mut rng, 3, 4);
        let reg = SpectralRegularizer::plain(Potential::hyperbola(0.5).unwrap());
        let q = reg_line_coeffs(&reg, &x, &CMatrix::zeros(3, 4), 0.7, Curvature::GR).unwrap();
        assert_eq!(q.c1, 0.0);
        assert_eq!(q.c2, 0.0);
        assert!((q.c0 - reg.value(&x).unwrap()).abs() < 1e-13);
        assert_eq!(mm_step(|_| Ok(q), 0.7, 5).unwrap(), 0.7);
    }

    #[test]
    fn majorizes_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let regs = [
            SpectralRegularizer::plain(Potential::hyperbola(0.3).unwrap()),
            SpectralRegularizer::plain(Potential::cauchy(0.3).unwrap()),
            SpectralRegularizer::tail(Potential::hyperbola(0.3).unwrap(), 3, 1).unwrap(),
        ];
        for reg in &regs {
            for _ in 0..5 {
                let x = random_complex(&mut rng, 3, 5);
                let d = random_complex(&mut rng, 3, 5);
                let center: f64 = rng.random_range(-1.0..1.0);
                for mode in [Curvature::GR, Curvature::GL] {
                    let q = reg_line_coeffs(reg, &x, &d, center, mode).unwrap();
                    let h = |a: f64| reg.value(&(&x + &d * c(a))).unwrap();
                    assert!((q.eval(center) - h(center)).abs() < 1e-12 * h(center).max(1.0));
                    for i in 0..=200 {
                        let a = -5.0 + i as f64 * 0.05;
                        assert!(q.eval(a) >= h(a) - 1e-9 * h(a).abs().max(1.0), "a={a}");
                    }
                }
                let qr = reg_line_coeffs(reg, &x, &d, center, Curvature::GR).unwrap();
                let ql = reg_line_coeffs(reg, &x, &d, center, Curvature::GL).unwrap();
                assert!(qr.c2 <= ql.c2 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn combine() {
        let qf = LineQuadratic { c0: 1.0, c1: -2.0, c2: 3.0, center: 0.5 };
        let qr = LineQuadratic { c0: 0.25, c1: 4.0, c2: 1.5, center: 0.5 };
        assert_eq!(combine_line_coeffs(&qf, &qr, 0.0).unwrap(), qf);
        assert_eq!(combine_line_coeffs(&qf, &LineQuadratic::zero(0.5), 1.0).unwrap(), qf);
        let s = combine_line_coeffs(&qf, &qr, 2.0).unwrap();
        assert_eq!(s, LineQuadratic { c0: 1.5, c1: 6.0, c2: 6.0, center: 0.5 });
        assert!(matches!(
            combine_line_coeffs(&qf, &LineQuadratic::zero(0.0), 1.0),
            Err(Error::CenterMismatch(..))
        ));
    }

    #[test]
    fn quadratic_solved_in_one_step() {
        // f(X) = 1/2 |X - Y|^2 along X + a D
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_complex(&mut rng, 4, 3);
        let y = random_complex(&mut rng, 4, 3);
        let d = random_complex(&mut rng, 4, 3);
        let coeffs = |a: f64| {
            let r = &x + &d * c(a) - &y;
            Ok(LineQuadratic { c0: 0.5 * frob_sq(&r), c1: re_inner(&r, &d), c2: frob_sq(&d), center: a })
        };
        let exact = re_inner(&(&y - &x), &d) / frob_sq(&d);
        for a0 in [0.0, -3.0, 10.0] {
            let a = mm_step(coeffs, a0, 1).unwrap();
            assert!((a - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn mm_descends_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reg = SpectralRegularizer::plain(Potential::hyperbola(0.1).unwrap());
        let lambda = 2.0;
        for _ in 0..20 {
            let x = random_complex(&mut rng, 3, 4);
            let y = random_complex(&mut rng, 3, 4);
            let d = random_complex(&mut rng, 3, 4);
            let h = |a: f64| {
                let z = &x + &d * c(a);
                0.5 * frob_sq(&(&z - &y)) + lambda * reg.value(&z).unwrap()
            };
            for mode in [Curvature::GR, Curvature::GL] {
                let coeffs = |a: f64| {
                    let r = &x + &d * c(a) - &y;
                    let qf = LineQuadratic { c0: 0.5 * frob_sq(&r), c1: re_inner(&r, &d), c2: frob_sq(&d), center: a };
                    combine_line_coeffs(&qf, &reg_line_coeffs(&reg, &x, &d, a, mode)?, lambda)
                };
                let mut prev = h(0.0);
                for n in 1..=4 {
                    let a = mm_step(coeffs, 0.0, n).unwrap();
                    assert!(h(a) <= prev + 1e-12 * prev.abs());
                    prev = h(a);
                }
            }
        }
    }

    #[test]
    fn non_finite_step_is_an_error() {
        let q = LineQuadratic { c0: 0.0, c1: f64::INFINITY, c2: 1.0, center: 0.0 };
        assert!(matches!(mm_step(|_| Ok(q), 0.0, 1), Err(Error::NonFinite(_))));
    }
}
