//! Posterior alternative probabilities and the step-down discovery rule.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sigmoid, UnitIntervalGrid};

/// Posterior probabilities `w_i = P(h_i = 1 | z_i)`, aligned with the
/// input tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PosteriorVector(Vec<f64>);

impl PosteriorVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain {
                name: "posterior",
                value: bad,
                domain: "[0, 1]",
            });
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for PosteriorVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<PosteriorVector> for Vec<f64> {
    fn from(w: PosteriorVector) -> Self {
        w.0
    }
}

fn check_densities(f0: f64, f1: f64) -> Result<()> {
    if !f0.is_finite() || !f1.is_finite() {
        return Err(Error::NonFinite("density value"));
    }
    if f0 < 0.0 || f1 < 0.0 {
        return Err(Error::Domain {
            name: "density",
            value: f0.min(f1),
            domain: "[0, inf)",
        });
    }
    Ok(())
}

/// `λ f1 / (λ f1 + (1 − λ) f0)`.
pub fn posterior_fixed_lambda(lambda: f64, f0: f64, f1: f64) -> Result<f64> {
    check_densities(f0, f1)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain {
            name: "lambda",
            value: lambda,
            domain: "[0, 1]",
        });
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    if lambda == 1.0 {
        return Ok(1.0);
    }
    let num = lambda * f1;
    let den = num + (1.0 - lambda) * f0;
    if den <= 0.0 {
        return Err(Error::UndefinedPosterior);
    }
    Ok(num / den)
}

/// Per-node values of `λ f1 / (λ f1 + (1 − λ) f0)` on a grid, computed in
/// logit form so that tail nodes stay exact.
pub(crate) fn node_posteriors(grid: &UnitIntervalGrid, f0: f64, f1: f64, out: &mut [f64]) -> Result<()> {
    match (f0 > 0.0, f1 > 0.0) {
        (false, false) => return Err(Error::UndefinedPosterior),
        (true, false) => out.iter_mut().for_each(|o| *o = 0.0),
        (false, true) => out.iter_mut().for_each(|o| *o = 1.0),
        (true, true) => {
            let log_ratio = libm::log(f1) - libm::log(f0);
            for (o, &t) in out.iter_mut().zip(grid.logits()) {
                *o = libm::exp(log_sigmoid(t + log_ratio));
            }
        }
    }
    Ok(())
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    for (name, v) in [("a", a), ("b", b)] {
        if !v.is_finite() {
            return Err(Error::NonFinite("Beta shape parameter"));
        }
        if v <= 0.0 {
            return Err(Error::Domain {
                name,
                value: v,
                domain: "(0, inf)",
            });
        }
    }
    Ok(())
}

/// Posterior alternative probability with `λ ~ Beta(a, b)` integrated
/// out on the grid: `Σ_j β_j λ_j f1 / (λ_j f1 + (1 − λ_j) f0)` with
/// normalised Beta weights `β_j`.
pub fn posterior_beta(a: f64, b: f64, f0: f64, f1: f64, grid: &UnitIntervalGrid) -> Result<f64> {
    let mut scratch = PosteriorScratch::new(grid.len());
    scratch.posterior(a, b, f0, f1, grid)
}

/// Reusable buffers for evaluating many posteriors on one grid.
#[derive(Debug, Clone)]
pub struct PosteriorScratch {
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl PosteriorScratch {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            weights: alloc::vec![0.0; n_nodes],
            values: alloc::vec![0.0; n_nodes],
        }
    }

    pub fn posterior(&mut self, a: f64, b: f64, f0: f64, f1: f64, grid: &UnitIntervalGrid) -> Result<f64> {
        check_densities(f0, f1)?;
        check_shape(a, b)?;
        self.weights.resize(grid.len(), 0.0);
        self.values.resize(grid.len(), 0.0);
        node_posteriors(grid, f0, f1, &mut self.values)?;
        grid.beta_weights_into(a, b, &mut self.weights);
        let w: f64 = self.weights.iter().zip(&self.values).map(|(p, v)| p * v).sum();
        Ok(w.clamp(0.0, 1.0))
    }
}

/// Outcome of the step-down rule at one nominal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResult {
    /// Rejected test indices, in descending-posterior order.
    pub rejected: Vec<usize>,
    pub m: usize,
    pub expected_fdp: f64,
    pub alpha: f64,
    /// All test indices sorted by descending posterior, ties by index.
    pub order: Vec<usize>,
}

impl DecisionResult {
    /// Boolean mask over `n` tests.
    pub fn rejected_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = alloc::vec![false; n];
        for &i in &self.rejected {
            mask[i] = true;
        }
        mask
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain {
            name: "alpha",
            value: alpha,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Descending order of `w`, ties broken by ascending index.
pub fn descending_order(w: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    order
}

/// Rejects the longest prefix of the descending-posterior order whose
/// mean local fdr `Σ (1 − w) / m` is at most `alpha`. Every prefix length
/// is checked and the largest feasible `m` is kept.
pub fn select_discoveries(w: &PosteriorVector, alpha: f64) -> Result<DecisionResult> {
    check_alpha(alpha)?;
    let w = w.as_slice();
    let order = descending_order(w);
    let mut cum = 0.0;
    let mut best = (0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        cum += 1.0 - w[i];
        let m = k + 1;
        let efdp = cum / m as f64;
        if efdp <= alpha {
            best = (m, efdp);
        }
    }
    let (m, expected_fdp) = best;
    Ok(DecisionResult {
        rejected: order[..m].to_vec(),
        m,
        expected_fdp,
        alpha,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_lambda_grid;
    use alloc::vec;

    #[test]
    fn fixed_lambda_examples() {
        assert_eq!(posterior_fixed_lambda(0.0, 0.3, 0.9).unwrap(), 0.0);
        assert!((posterior_fixed_lambda(0.37, 0.2, 0.2).unwrap() - 0.37).abs() < 1e-15);
        assert!((posterior_fixed_lambda(0.5, 0.05, 0.20).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(posterior_fixed_lambda(0.5, 0.0, 0.0), Err(Error::UndefinedPosterior));
        assert!(posterior_fixed_lambda(1.5, 0.1, 0.1).is_err());
    }

    #[test]
    fn beta_posterior_with_equal_densities_is_prior_mean() {
        let g = make_lambda_grid(100).unwrap();
        let w = posterior_beta(3.0, 3.0, 0.2, 0.2, &g).unwrap();
        assert!((w - 0.5).abs() < 1e-6);
    }

    #[test]
    fn beta_posterior_uniform_prior_matches_fine_quadrature() {
        let g = make_lambda_grid(100).unwrap();
        let w = posterior_beta(1.0, 1.0, 0.05, 0.20, &g).unwrap();
        let n = 10_000;
        let oracle: f64 = (0..n)
            .map(|i| {
                let l = (i as f64 + 0.5) / n as f64;
                0.2 * l / (0.2 * l + 0.05 * (1.0 - l)) / n as f64
            })
            .sum();
        assert!((w - oracle).abs() < 1e-6, "{w} vs {oracle}");
    }

    #[test]
    fn concentrated_beta_approaches_fixed_lambda() {
        let g = make_lambda_grid(100).unwrap();
        let w = posterior_beta(1e4, 1e4, 0.05, 0.2, &g).unwrap();
        let fixed = posterior_fixed_lambda(0.5, 0.05, 0.2).unwrap();
        assert!((w - fixed).abs() < 1e-3, "{w} vs {fixed}");
    }

    #[test]
    fn beta_posterior_edge_densities() {
        let g = make_lambda_grid(50).unwrap();
        assert_eq!(posterior_beta(2.0, 2.0, 0.1, 0.0, &g).unwrap(), 0.0);
        assert_eq!(posterior_beta(2.0, 2.0, 0.0, 0.1, &g).unwrap(), 1.0);
        assert_eq!(posterior_beta(2.0, 2.0, 0.0, 0.0, &g), Err(Error::UndefinedPosterior));
        assert!(posterior_beta(0.0, 2.0, 0.1, 0.1, &g).is_err());
    }

    #[test]
    fn select_all_when_certain() {
        let w = PosteriorVector::new(vec![1.0; 7]).unwrap();
        let d = select_discoveries(&w, 0.05).unwrap();
        assert_eq!(d.m, 7);
        assert_eq!(d.expected_fdp, 0.0);
    }

    #[test]
    fn select_prefix_example() {
        let w = PosteriorVector::new(vec![0.5, 0.99, 0.9]).unwrap();
        let d = select_discoveries(&w, 0.1).unwrap();
        assert_eq!(d.m, 2);
        assert_eq!(d.rejected, vec![1, 2]);
        assert!((d.expected_fdp - 0.055).abs() < 1e-12);
        assert_eq!(d.order, vec![1, 2, 0]);
    }

    #[test]
    fn select_none_without_evidence() {
        let w = PosteriorVector::new(vec![0.0; 4]).unwrap();
        let d = select_discoveries(&w, 0.2).unwrap();
        assert_eq!(d.m, 0);
        assert_eq!(d.expected_fdp, 0.0);
        assert!(d.rejected.is_empty());
    }

    #[test]
    fn ties_break_by_index() {
        let w = PosteriorVector::new(vec![0.9, 0.95, 0.9, 0.95]).unwrap();
        let d = select_discoveries(&w, 0.5).unwrap();
        assert_eq!(d.order, vec![1, 3, 0, 2]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(PosteriorVector::new(vec![0.5, 1.2]).is_err());
        let w = PosteriorVector::new(vec![0.5]).unwrap();
        assert!(select_discoveries(&w, 0.0).is_err());
        assert!(select_discoveries(&w, 1.0).is_err());
    }
}
