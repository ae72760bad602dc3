//! Quadrature grids on the unit interval (mixing proportions) and on the
//! real line (signal offsets).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sigmoid, NullParams};

/// Default node count of the λ grid.
pub const DEFAULT_LAMBDA_NODES: usize = 100;

/// Half-width, in the sinh variable, of the logit-sinh λ grid.
const SINH_HALF_WIDTH: f64 = 5.0;

/// Nodes and weights for integrating against a density on (0, 1).
///
/// Nodes are held in logit form together with `ln λ` and `ln(1 − λ)` so
/// that tail nodes closer to 0 or 1 than `f64` can resolve stay usable
/// by Beta log-densities with shape parameters far below one.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitIntervalGrid {
    nodes: Vec<f64>,
    logits: Vec<f64>,
    log_nodes: Vec<f64>,
    log_complements: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

/// The default λ grid: `n_nodes` points of the logit-sinh rule.
pub fn make_lambda_grid(n_nodes: usize) -> Result<UnitIntervalGrid> {
    UnitIntervalGrid::logit_sinh(n_nodes)
}

impl UnitIntervalGrid {
    /// Midpoint rule: nodes `(j + 1/2) / n`, weights `1 / n`.
    pub fn midpoint(n_nodes: usize) -> Result<Self> {
        check_nodes(n_nodes)?;
        let n = n_nodes as f64;
        let logits = (0..n_nodes)
            .map(|j| {
                let x = (j as f64 + 0.5) / n;
                libm::log(x) - libm::log1p(-x)
            })
            .collect::<Vec<_>>();
        let log_w = -libm::log(n);
        Ok(Self::from_logits(logits, alloc::vec![log_w; n_nodes]))
    }

    /// Double-exponential rule: a midpoint grid in `s ∈ (−5, 5)` mapped
    /// through `logit λ = 2 sinh s`, with weights `dλ/ds` renormalised to
    /// sum to one. Node density grows doubly exponentially toward both
    /// endpoints, which resolves `λ^{a−1}` singularities for small `a`.
    pub fn logit_sinh(n_nodes: usize) -> Result<Self> {
        check_nodes(n_nodes)?;
        let n = n_nodes as f64;
        let step = 2.0 * SINH_HALF_WIDTH / n;
        let mut logits = Vec::with_capacity(n_nodes);
        let mut log_w = Vec::with_capacity(n_nodes);
        for j in 0..n_nodes {
            let s = -SINH_HALF_WIDTH + (j as f64 + 0.5) * step;
            let t = 2.0 * libm::sinh(s);
            logits.push(t);
            // dλ/ds = σ(t) σ(−t) · 2 cosh s
            log_w.push(
                log_sigmoid(t) + log_sigmoid(-t) + libm::log(2.0 * libm::cosh(s)) + libm::log(step),
            );
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_w.iter().map(|lw| libm::exp(lw - max)).sum();
        let log_total = max + libm::log(total);
        for lw in &mut log_w {
            *lw -= log_total;
        }
        Ok(Self::from_logits(logits, log_w))
    }

    fn from_logits(logits: Vec<f64>, log_weights: Vec<f64>) -> Self {
        let log_nodes: Vec<f64> = logits.iter().map(|&t| log_sigmoid(t)).collect();
        let log_complements: Vec<f64> = logits.iter().map(|&t| log_sigmoid(-t)).collect();
        let nodes = log_nodes.iter().map(|&l| libm::exp(l)).collect();
        let weights = log_weights.iter().map(|&l| libm::exp(l)).collect();
        Self {
            nodes,
            logits,
            log_nodes,
            log_complements,
            weights,
            log_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node values λ_j. Tail nodes within 2⁻⁵³ of 1 round to 1.0 here; use
    /// [`Self::log_complements`] for `ln(1 − λ_j)`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `logit λ_j`, strictly increasing.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn log_nodes(&self) -> &[f64] {
        &self.log_nodes
    }

    pub fn log_complements(&self) -> &[f64] {
        &self.log_complements
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Normalised Beta(a, b) quadrature weights on this grid, written into
    /// `out`. Normalising makes the rule exact for constants whatever the
    /// shape, so only the relative weights matter.
    pub fn beta_weights_into(&self, a: f64, b: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let mut max = f64::NEG_INFINITY;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.log_weights[j]
                + (a - 1.0) * self.log_nodes[j]
                + (b - 1.0) * self.log_complements[j];
            max = max.max(*o);
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = libm::exp(*o - max);
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    /// Grid estimate of `∫ f(λ) dλ` over (0, 1).
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

impl Default for UnitIntervalGrid {
    fn default() -> Self {
        Self::logit_sinh(DEFAULT_LAMBDA_NODES).expect("default node count is valid")
    }
}

fn check_nodes(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(alloc::format!(
            "a lambda grid needs at least 2 nodes, got {n}"
        )));
    }
    Ok(())
}

/// Equally spaced support points for the signal offset τ, with trapezoid
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealLineGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

pub const DEFAULT_TAU_NODES: usize = 201;
pub const DEFAULT_TAU_HALF_WIDTH_SIGMAS: f64 = 10.0;

impl RealLineGrid {
    /// `n_nodes` equally spaced points on `[−half_width, half_width]`.
    pub fn symmetric(half_width: f64, n_nodes: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain {
                name: "half_width",
                value: half_width,
                domain: "(0, inf)",
            });
        }
        if n_nodes < 2 {
            return Err(Error::Config(alloc::format!(
                "a tau grid needs at least 2 nodes, got {n_nodes}"
            )));
        }
        let h = 2.0 * half_width / (n_nodes - 1) as f64;
        let nodes = (0..n_nodes)
            .map(|j| {
                // mirror the upper half so the grid is exactly symmetric
                let k = j.min(n_nodes - 1 - j) as f64;
                let x = -half_width + k * h;
                if 2 * j + 1 == n_nodes {
                    0.0
                } else if j < n_nodes - 1 - j {
                    x
                } else {
                    -x
                }
            })
            .collect();
        Self::from_nodes(nodes)
    }

    /// Default τ grid for a null: 201 nodes spanning ±10σ.
    pub fn for_null(null: &NullParams) -> Self {
        Self::symmetric(DEFAULT_TAU_HALF_WIDTH_SIGMAS * null.sigma(), DEFAULT_TAU_NODES)
            .expect("default tau grid is valid")
    }

    /// Arbitrary strictly increasing nodes with trapezoid weights.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Config(alloc::format!(
                "a tau grid needs at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tau grid node"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("tau grid nodes must be strictly increasing".into()));
        }
        let n = nodes.len();
        let mut weights = alloc::vec![0.0; n];
        for j in 0..n - 1 {
            let half = 0.5 * (nodes[j + 1] - nodes[j]);
            weights[j] += half;
            weights[j + 1] += half;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoid integral of values sampled at the nodes.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

impl TryFrom<Vec<f64>> for RealLineGrid {
    type Error = Error;

    fn try_from(nodes: Vec<f64>) -> Result<Self> {
        Self::from_nodes(nodes)
    }
}

impl From<RealLineGrid> for Vec<f64> {
    fn from(grid: RealLineGrid) -> Self {
        grid.nodes
    }
}
