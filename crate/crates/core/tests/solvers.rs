use spectral_huber::llr::{LocalLowRank, PatchGeometry};
use spectral_huber::model::{generate_synthetic, SyntheticConfig};
use spectral_huber::solvers::{
    default_lambda, fista_pa_solve, matched_nuclear_weight, ncg_solve, nrmse, pogm_pa_solve, Method, SolverConfig,
};
use spectral_huber::{Potential, SpectralRegularizer};

#[test]
fn smooth_and_nuclear_reconstructions_agree_for_small_delta() {
    let syn = SyntheticConfig { image: [16, 16], frames: 6, coils: 3, rank: 2, acceleration: 3.0, ..Default::default() };
    let problem = generate_synthetic(&syn).unwrap();
    let truth = problem.truth.clone().unwrap();
    let geom = PatchGeometry::new(syn.image, [4, 4]).unwrap();
    let pot = Potential::hyperbola(1e-3).unwrap();
    let llr = LocalLowRank::new(SpectralRegularizer::plain(pot), geom.clone());
    let x0 = problem.datashare_init().unwrap();
    let lambda = default_lambda(&problem, &llr, &x0).unwrap();

    let ncg = ncg_solve(&problem, &llr, &SolverConfig { max_iter: 150, lambda, ..Default::default() }, &x0).unwrap();
    let pa = SolverConfig { max_iter: 150, lambda: matched_nuclear_weight(&pot, lambda), ..Default::default() };
    let fista = fista_pa_solve(&problem, &geom, &SolverConfig { method: Method::FistaPa, ..pa.clone() }, &x0).unwrap();
    let pogm = pogm_pa_solve(&problem, &geom, &SolverConfig { method: Method::PogmPa, ..pa }, &x0).unwrap();

    let e0 = nrmse(&x0, &truth).unwrap();
    let errs = [ncg.x, fista.x, pogm.x].map(|x| nrmse(&x, &truth).unwrap());
    for e in errs {
        assert!(e < e0, "{errs:?} vs start {e0}");
    }
    assert!((errs[0] - errs[1]).abs() <= 0.02, "{errs:?}");
    assert!((errs[1] - errs[2]).abs() <= 0.02, "{errs:?}");
    assert_eq!(ncg.cost_increases, 0);
}
