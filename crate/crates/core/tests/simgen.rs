use neurt_fdr_core::regression::fit_regression;
use neurt_fdr_core::simgen::{generate, AltKind, PriorKind, ScenarioConfig};

fn large(prior: PriorKind) -> neurt_fdr_core::simgen::SyntheticDataset {
    generate(&ScenarioConfig {
        n: 100_000,
        seed: 41,
        ..ScenarioConfig::new(prior, AltKind::WellSeparated)
    })
    .unwrap()
}

#[test]
fn linear_prior_is_informative() {
    let d = large(PriorKind::Linear);
    let h: Vec<f64> = d.h.iter().map(|&v| v as u8 as f64).collect();
    let n = h.len() as f64;
    let (mp, mh) = (d.prior_prob.iter().sum::<f64>() / n, h.iter().sum::<f64>() / n);
    let cov: f64 = d.prior_prob.iter().zip(&h).map(|(p, h)| (p - mp) * (h - mh)).sum::<f64>() / n;
    let sp = (d.prior_prob.iter().map(|p| (p - mp).powi(2)).sum::<f64>() / n).sqrt();
    let sh = (h.iter().map(|h| (h - mh).powi(2)).sum::<f64>() / n).sqrt();
    let corr = cov / (sp * sh);
    assert!(corr >= 0.3, "corr = {corr}");
}

#[test]
fn auxiliary_features_carry_the_prior_logit() {
    for prior in [PriorKind::Linear, PriorKind::Nonlinear] {
        let d = large(prior);
        // probabilities saturate in f64 for large logits
        let logit: Vec<f64> = d
            .prior_prob
            .iter()
            .map(|p| p.clamp(1e-12, 1.0 - 1e-12))
            .map(|p| (p / (1.0 - p)).ln())
            .collect();
        let reg = fit_regression(&logit, &logit, &d.x_aux).unwrap();
        for (j, (c, se)) in reg.delta_a.iter().zip(&reg.se_a[1..]).enumerate() {
            assert!(c.abs() >= 5.0 * se, "{prior}: aux_{} coefficient {c} with se {se}", j + 1);
        }
    }
}

#[test]
fn same_config_same_bits() {
    let c = ScenarioConfig {
        n: 500,
        seed: 9,
        ..ScenarioConfig::new(PriorKind::Nonlinear, AltKind::PoorlySeparated)
    };
    assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
}
