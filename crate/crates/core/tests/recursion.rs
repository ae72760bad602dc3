use neurt_fdr_core::numerics::{NullParams, RealLineGrid};
use neurt_fdr_core::recursion::{fit_predictive_recursion, PrConfig, PredictiveRecursion};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn null_draws(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_step_keeps_a_probability_measure(z in prop::collection::vec(-40.0f64..40.0, 1..200)) {
        let null = NullParams::standard();
        let grid = RealLineGrid::for_null(&null);
        let mut pr = PredictiveRecursion::new(null, grid.clone(), 0.9).unwrap();
        let gamma_exponent = PrConfig::default().gamma_exponent;
        for (i, &v) in z.iter().enumerate() {
            pr.step(v, ((i + 1) as f64).powf(-gamma_exponent)).unwrap();
            prop_assert!(pr.pi_tau().iter().all(|&p| p >= 0.0));
            prop_assert!((0.0..=1.0).contains(&pr.pi0()));
            let mass = pr.pi0() + grid.trapezoid(pr.pi_tau());
            prop_assert!((mass - 1.0).abs() <= 1e-9, "step {} mass {}", i, mass);
        }
    }
}

#[test]
fn alternative_density_integrates_to_one() {
    let null = NullParams::standard();
    let grid = RealLineGrid::for_null(&null);
    let mut z = null_draws(2000, 11);
    for v in z.iter_mut().step_by(4) {
        *v += 3.0;
    }
    let d = fit_predictive_recursion(&z, &null, &grid, &PrConfig::default()).unwrap();
    let step = 0.01;
    let total: f64 = (0..=4000).map(|i| d.f1(-20.0 + step * i as f64).unwrap() * step).sum();
    assert!((total - 1.0).abs() <= 1e-3, "total = {total}");
}

#[test]
fn permutation_seeds_barely_move_pi0() {
    let null = NullParams::standard();
    let grid = RealLineGrid::for_null(&null);
    let z = null_draws(5000, 12);
    let pi0: Vec<f64> = (0..5)
        .map(|seed| {
            let c = PrConfig { seed, ..PrConfig::default() };
            fit_predictive_recursion(&z, &null, &grid, &c).unwrap().pi0()
        })
        .collect();
    let range = pi0.iter().cloned().fold(f64::MIN, f64::max) - pi0.iter().cloned().fold(f64::MAX, f64::min);
    assert!(PrConfig::default().n_sweeps >= 2);
    assert!(range <= 0.05, "pi0 across seeds: {pi0:?}");
}
