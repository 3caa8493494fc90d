use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spectral_huber::linalg::{frob, frob_sq, random_complex, random_unitary};
use spectral_huber::llr::{LocalLowRank, PatchGeometry};
use spectral_huber::{Potential, SpectralRegularizer};

fn llr(geom: &PatchGeometry, delta: f64) -> LocalLowRank {
    LocalLowRank::new(SpectralRegularizer::plain(Potential::hyperbola(delta).unwrap()), geom.clone())
}

#[test]
fn shifted_patches_tile_every_voxel_once_per_shift() {
    // with phi(t) = t^2 each term is |P S X|_F^2, so the total is |shifts| |X|^2
    let geom = PatchGeometry::new([8, 12], [4, 6]).unwrap();
    assert_eq!((geom.locations().len(), geom.shifts().len()), (4, 24));
    let reg = LocalLowRank::new(SpectralRegularizer::plain(Potential::parabola()), geom.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_complex(&mut rng, 96, 3);
    let n = geom.shifts().len() as f64;
    let v = reg.value(&x).unwrap();
    assert!((v - n * frob_sq(&x)).abs() <= 1e-10 * v);
    let g = reg.grad(&x).unwrap();
    assert!(frob(&(g - &x * Complex64::new(2.0 * n, 0.0))) <= 1e-10 * v.sqrt());
}

#[test]
fn large_geometry_counts() {
    let geom = PatchGeometry::new([128, 128], [8, 8]).unwrap();
    assert_eq!(geom.locations().len(), 256);
    assert_eq!(geom.shifts().len(), 64);
    assert_eq!(geom.patch_rank(40), 40);
    assert!(PatchGeometry::new([128, 128], [7, 7]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn value_invariant_under_frame_rotation_and_phase(seed in any::<u64>(), phase in 0.0..std::f64::consts::TAU) {
        let geom = PatchGeometry::new([8, 8], [4, 4]).unwrap();
        let reg = llr(&geom, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_complex(&mut rng, 64, 5);
        let v = reg.value(&x).unwrap();
        let rotated = &x * random_unitary(&mut rng, 5);
        let phased = &x * Complex64::from_polar(1.0, phase);
        prop_assert!((reg.value(&rotated).unwrap() - v).abs() <= 1e-9 * v);
        prop_assert!((reg.value(&phased).unwrap() - v).abs() <= 1e-9 * v);
    }

    #[test]
    fn value_invariant_under_circular_shift_of_image(seed in any::<u64>(), sx in 0usize..8, sy in 0usize..8) {
        // the full shift set covers every circular offset of the patch grid
        let geom = PatchGeometry::new([8, 8], [4, 4]).unwrap();
        let reg = llr(&geom, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_complex(&mut rng, 64, 3);
        let moved = x.clone();
        let mut moved = moved;
        for ix in 0..8 {
            for iy in 0..8 {
                let to = ((ix + sx) % 8) * 8 + (iy + sy) % 8;
                moved.set_row(to, &x.row(ix * 8 + iy));
            }
        }
        let v = reg.value(&x).unwrap();
        prop_assert!((reg.value(&moved).unwrap() - v).abs() <= 1e-9 * v);
    }

    #[test]
    fn gradient_is_zero_only_at_zero(seed in any::<u64>()) {
        let geom = PatchGeometry::new([4, 4], [2, 2]).unwrap();
        let reg = llr(&geom, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_complex(&mut rng, 16, 2);
        prop_assert!(frob(&reg.grad(&(&x * Complex64::new(0.0, 0.0))).unwrap()) == 0.0);
        prop_assert!(frob(&reg.grad(&x).unwrap()) > 0.0);
    }
}
