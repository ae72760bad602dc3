use neurt_fdr_core::baselines::{bh, storey_bh, PValueVector};
use neurt_fdr_core::numerics::make_lambda_grid;
use neurt_fdr_core::twogroups::{posterior_beta, select_discoveries, PosteriorVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

fn p_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.0f64..0.01, 0.0f64..=1.0], 1..120)
}

fn w_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![0.9f64..=1.0, 0.0f64..=1.0, Just(0.5)], 1..120)
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|i| b.contains(i))
}

proptest! {
    #[test]
    fn bh_grows_with_alpha(p in p_vec(), a1 in 0.01f64..0.5, extra in 0.0f64..0.4) {
        let p = PValueVector::new(p).unwrap();
        let small = bh(&p, a1).unwrap();
        let large = bh(&p, a1 + extra).unwrap();
        prop_assert!(is_subset(&small, &large));
    }

    #[test]
    fn storey_contains_bh(p in p_vec(), alpha in 0.01f64..0.5) {
        let p = PValueVector::new(p).unwrap();
        prop_assert!(is_subset(&bh(&p, alpha).unwrap(), &storey_bh(&p, alpha, 0.5).unwrap()));
    }

    #[test]
    fn selection_is_a_feasible_prefix(w in w_vec(), a1 in 0.01f64..0.5, extra in 0.0f64..0.4) {
        let pv = PosteriorVector::new(w.clone()).unwrap();
        let d = select_discoveries(&pv, a1).unwrap();
        prop_assert_eq!(d.m, d.rejected.len());
        if d.m > 0 {
            let recomputed = d.rejected.iter().map(|&i| 1.0 - w[i]).sum::<f64>() / d.m as f64;
            prop_assert!(recomputed <= a1 + 1e-12);
            prop_assert!((recomputed - d.expected_fdp).abs() <= 1e-12);
        }
        let min_in = d.rejected.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
        let max_out = (0..w.len()).filter(|i| !d.rejected.contains(i)).map(|i| w[i]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(d.m == 0 || min_in >= max_out);
        prop_assert!(select_discoveries(&pv, a1 + extra).unwrap().m >= d.m);
    }

    #[test]
    fn posterior_converges_in_grid_size(
        a in 0.2f64..50.0,
        b in 0.2f64..50.0,
        f0 in 1e-4f64..1.0,
        f1 in 1e-4f64..1.0,
    ) {
        let coarse = posterior_beta(a, b, f0, f1, &make_lambda_grid(100).unwrap()).unwrap();
        let fine = posterior_beta(a, b, f0, f1, &make_lambda_grid(10_000).unwrap()).unwrap();
        prop_assert!((coarse - fine).abs() <= 1e-4);
    }
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn bh_controls_fdr_under_the_null() {
    let (n, reps, alpha) = (2000, 200, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut any = 0usize;
    for _ in 0..reps {
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        // with no true signals FDP is 1 whenever anything is rejected
        if !bh(&PValueVector::new(p).unwrap(), alpha).unwrap().is_empty() {
            any += 1;
        }
    }
    let fdr = any as f64 / reps as f64;
    let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
    assert!(fdr <= alpha + 2.0 * se, "empirical FDR {fdr}");
}

/// Data drawn exactly from the hierarchical model, scored with the true
/// densities and Beta parameters.
#[test]
fn true_model_posteriors_are_calibrated() {
    let (n, reps, alpha) = (1000, 50, 0.1);
    let grid = make_lambda_grid(100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut total = 0.0;
    for _ in 0..reps {
        let mut w = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for _ in 0..n {
            let a = 1.0 + 4.0 * rng.random::<f64>();
            let b = 2.0 + 6.0 * rng.random::<f64>();
            let lambda = Beta::new(a, b).unwrap().sample(&mut rng);
            let alt = rng.random::<f64>() < lambda;
            let e: f64 = StandardNormal.sample(&mut rng);
            let z = if alt { e + if rng.random::<bool>() { 2.5 } else { -2.5 } } else { e };
            let f1 = 0.5 * normal_pdf(z - 2.5) + 0.5 * normal_pdf(z + 2.5);
            w.push(posterior_beta(a, b, normal_pdf(z), f1, &grid).unwrap());
            h.push(alt);
        }
        let d = select_discoveries(&PosteriorVector::new(w).unwrap(), alpha).unwrap();
        let false_hits = d.rejected.iter().filter(|&&i| !h[i]).count();
        total += false_hits as f64 / d.m.max(1) as f64;
    }
    let fdr = total / reps as f64;
    assert!(fdr <= alpha + 0.02, "mean FDP {fdr}");
}
