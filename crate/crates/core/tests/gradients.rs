use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spectral_huber::linalg::{frob, random_complex, re_inner};
use spectral_huber::llr::{LocalLowRank, PatchGeometry};
use spectral_huber::model::{generate_synthetic, LinearOperator, SyntheticConfig};
use spectral_huber::{CMatrix, Potential, SpectralRegularizer};

fn small_problem() -> SyntheticConfig {
    SyntheticConfig { image: [8, 8], frames: 5, coils: 3, rank: 2, ..Default::default() }
}

/// Central difference of `f` at `x` along `d`.
fn directional(f: impl Fn(&CMatrix) -> f64, x: &CMatrix, d: &CMatrix, h: f64) -> f64 {
    let step = d * Complex64::new(h, 0.0);
    (f(&(x + &step)) - f(&(x - &step))) / (2.0 * h)
}

#[test]
fn mri_adjoint_passes_dot_test() {
    let problem = generate_synthetic(&small_problem()).unwrap();
    let op = &problem.operator;
    let (m, n) = op.input_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let x = random_complex(&mut rng, m, n);
        let z = random_complex(&mut rng, op.output_rows(), n);
        let lhs = op.apply(&x).dotc(&z);
        let rhs = x.dotc(&op.adjoint(&z));
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn data_term_gradient_matches_finite_differences() {
    let problem = generate_synthetic(&small_problem()).unwrap();
    let (m, n) = problem.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_complex(&mut rng, m, n);
    let g = problem.f_grad(&x).unwrap();
    for _ in 0..5 {
        let d = random_complex(&mut rng, m, n);
        let fd = directional(|y| problem.f_value(y).unwrap(), &x, &d, 1e-4);
        assert!((fd - re_inner(&g, &d)).abs() <= 1e-6 * fd.abs().max(1.0), "{fd} vs {}", re_inner(&g, &d));
    }
}

#[test]
fn llr_gradient_matches_finite_differences() {
    let geom = PatchGeometry::new([8, 8], [4, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_complex(&mut rng, 64, 6);
    for reg in [
        SpectralRegularizer::plain(Potential::hyperbola(0.3).unwrap()),
        SpectralRegularizer::tail(Potential::hyperbola(0.3).unwrap(), 6, 2).unwrap(),
        SpectralRegularizer::plain(Potential::cauchy(0.5).unwrap()),
    ] {
        let llr = LocalLowRank::new(reg, geom.clone());
        let g = llr.grad(&x).unwrap();
        for _ in 0..3 {
            let d = random_complex(&mut rng, 64, 6);
            let fd = directional(|y| llr.value(y).unwrap(), &x, &d, 1e-5);
            let an = re_inner(&g, &d);
            assert!((fd - an).abs() <= 1e-6 * frob(&g) * frob(&d), "{fd} vs {an}");
        }
    }
}
