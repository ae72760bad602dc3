//! Nonparametric estimate of the alternative density by predictive
//! recursion.
//!
//! The test statistics are modelled as `z ~ N(μ + τ, σ²)` with a mixing
//! measure `Ψ = π₀ δ₀ + π(τ) dτ`: an atom at τ = 0 carrying the null mass
//! and a continuous signal component on a τ grid. Each observation moves
//! `Ψ` toward its posterior given that observation,
//!
//! ```text
//! Ψᵢ = (1 − γᵢ) Ψᵢ₋₁ + γᵢ N(zᵢ | μ + τ, σ²) Ψᵢ₋₁ / mᵢ₋₁(zᵢ)
//! ```
//!
//! where the marginal `mᵢ₋₁` integrates the continuous part by the
//! trapezoid rule. Both terms are probability measures, so total mass is
//! conserved at every step.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{NullParams, RealLineGrid};
use crate::rng::{substream, Stream};

/// Tolerance on `π₀ + ∫π` when accepting a density from outside.
const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrConfig {
    /// Passes over the data, each in a fresh random order.
    pub n_sweeps: usize,
    /// Weights are `γᵢ = (i + 1)^(−gamma_exponent)`.
    pub gamma_exponent: f64,
    pub initial_pi0: f64,
    pub seed: u64,
}

impl Default for PrConfig {
    fn default() -> Self {
        Self {
            n_sweeps: 10,
            gamma_exponent: 2.0 / 3.0,
            initial_pi0: 0.9,
            seed: 0,
        }
    }
}

impl PrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_exponent > 0.5 && self.gamma_exponent <= 1.0) {
            return Err(Error::Domain {
                name: "gamma_exponent",
                value: self.gamma_exponent,
                domain: "(0.5, 1]",
            });
        }
        if !(self.initial_pi0 > 0.0 && self.initial_pi0 < 1.0) {
            return Err(Error::Domain {
                name: "initial_pi0",
                value: self.initial_pi0,
                domain: "(0, 1)",
            });
        }
        Ok(())
    }
}

/// Fitted mixing measure: null mass `pi0` and signal density `pi_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityDocument", into = "DensityDocument")]
pub struct AlternativeDensity {
    tau_grid: RealLineGrid,
    pi_tau: Vec<f64>,
    pi0: f64,
    null: NullParams,
}

/// On-disk form: `{tau_nodes, pi_tau, pi0, mu, sigma}`.
#[derive(Serialize, Deserialize)]
struct DensityDocument {
    tau_nodes: Vec<f64>,
    pi_tau: Vec<f64>,
    pi0: f64,
    mu: f64,
    sigma: f64,
}

impl TryFrom<DensityDocument> for AlternativeDensity {
    type Error = Error;

    fn try_from(doc: DensityDocument) -> Result<Self> {
        let grid = RealLineGrid::from_nodes(doc.tau_nodes)?;
        AlternativeDensity::new(grid, doc.pi_tau, doc.pi0, NullParams::new(doc.mu, doc.sigma)?)
    }
}

impl From<AlternativeDensity> for DensityDocument {
    fn from(d: AlternativeDensity) -> Self {
        DensityDocument {
            tau_nodes: d.tau_grid.nodes().to_vec(),
            pi_tau: d.pi_tau,
            pi0: d.pi0,
            mu: d.null.mu(),
            sigma: d.null.sigma(),
        }
    }
}

impl AlternativeDensity {
    /// Validates the mixing measure: nonnegative, `pi0 ∈ [0, 1]` and total
    /// mass one within 1e-6.
    pub fn new(tau_grid: RealLineGrid, pi_tau: Vec<f64>, pi0: f64, null: NullParams) -> Result<Self> {
        if pi_tau.len() != tau_grid.len() {
            return Err(Error::Dimension {
                what: "pi_tau",
                expected: tau_grid.len(),
                got: pi_tau.len(),
            });
        }
        if pi_tau.iter().any(|p| !p.is_finite()) || !pi0.is_finite() {
            return Err(Error::NonFinite("mixing measure"));
        }
        if pi_tau.iter().any(|&p| p < 0.0) {
            return Err(Error::Config("pi_tau must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&pi0) {
            return Err(Error::Domain {
                name: "pi0",
                value: pi0,
                domain: "[0, 1]",
            });
        }
        let mass = pi0 + tau_grid.trapezoid(&pi_tau);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Config(alloc::format!(
                "mixing measure has total mass {mass}, expected 1"
            )));
        }
        Ok(Self {
            tau_grid,
            pi_tau,
            pi0,
            null,
        })
    }

    pub fn tau_grid(&self) -> &RealLineGrid {
        &self.tau_grid
    }

    pub fn pi_tau(&self) -> &[f64] {
        &self.pi_tau
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn null(&self) -> &NullParams {
        &self.null
    }

    /// Trapezoid mass of the continuous component, `1 − pi0` up to rounding.
    pub fn signal_mass(&self) -> f64 {
        self.tau_grid.trapezoid(&self.pi_tau)
    }

    /// Alternative density `f1(z) = ∫ N(z | μ + τ, σ²) π(τ) dτ / ∫ π`.
    pub fn f1(&self, z: f64) -> Result<f64> {
        f1_eval(self, z)
    }

    /// Null density at z.
    pub fn f0(&self, z: f64) -> Result<f64> {
        crate::numerics::normal_pdf(z, &self.null)
    }

    /// `(f0(z), f1(z))`, multiplied by a common positive factor when both
    /// would underflow. The ratio, and hence any posterior, is unchanged.
    pub fn density_pair(&self, z: f64) -> Result<(f64, f64)> {
        let (f0, f1) = (self.f0(z)?, self.f1(z)?);
        if f0.max(f1) >= SCALE_THRESHOLD {
            return Ok((f0, f1));
        }
        let l0 = self.null.log_kernel_shifted(z, 0.0);
        let top = self
            .tau_grid
            .nodes()
            .iter()
            .zip(&self.pi_tau)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&tau, _)| self.null.log_kernel_shifted(z, tau))
            .fold(l0, f64::max);
        let conv: f64 = self
            .tau_grid
            .nodes()
            .iter()
            .zip(self.tau_grid.weights())
            .zip(&self.pi_tau)
            .filter(|(_, &p)| p > 0.0)
            .map(|((&tau, &w), &p)| w * p * libm::exp(self.null.log_kernel_shifted(z, tau) - top))
            .sum();
        Ok((libm::exp(l0 - top), conv / self.signal_mass()))
    }
}

/// Below this both densities are recomputed on a rescaled footing.
const SCALE_THRESHOLD: f64 = 1e-280;

/// Evaluates the alternative density with the continuous component
/// normalised to a probability density.
pub fn f1_eval(density: &AlternativeDensity, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("z statistic"));
    }
    let mass = density.signal_mass();
    if !(mass > 0.0) {
        return Err(Error::NoSignalMass);
    }
    let grid = &density.tau_grid;
    let conv: f64 = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .zip(&density.pi_tau)
        .filter(|(_, &p)| p > 0.0)
        .map(|((&tau, &w), &p)| w * p * density.null.density_shifted(z, tau))
        .sum();
    Ok(conv / mass)
}

/// Running state of the recursion, exposed so that callers can inspect
/// the measure after every update.
#[derive(Debug, Clone)]
pub struct PredictiveRecursion {
    null: NullParams,
    tau_grid: RealLineGrid,
    pi_tau: Vec<f64>,
    pi0: f64,
    kernel: Vec<f64>,
}

impl PredictiveRecursion {
    /// Starts from `initial_pi0` at the null atom and the remaining mass
    /// spread uniformly over the τ grid.
    pub fn new(null: NullParams, tau_grid: RealLineGrid, initial_pi0: f64) -> Result<Self> {
        if !(initial_pi0 > 0.0 && initial_pi0 < 1.0) {
            return Err(Error::Domain {
                name: "initial_pi0",
                value: initial_pi0,
                domain: "(0, 1)",
            });
        }
        let width: f64 = tau_grid.weights().iter().sum();
        let pi_tau = alloc::vec![(1.0 - initial_pi0) / width; tau_grid.len()];
        let kernel = alloc::vec![0.0; tau_grid.len()];
        Ok(Self {
            null,
            tau_grid,
            pi_tau,
            pi0: initial_pi0,
            kernel,
        })
    }

    /// One update with observation `z` and weight `gamma ∈ (0, 1)`.
    pub fn step(&mut self, z: f64, gamma: f64) -> Result<()> {
        // Only kernel/marginal ratios enter the update, so kernels are
        // rescaled by their largest value; far outliers then cannot underflow.
        let e0 = self.null.log_kernel_shifted(z, 0.0);
        let mut top = e0;
        for (k, &tau) in self.kernel.iter_mut().zip(self.tau_grid.nodes()) {
            *k = self.null.log_kernel_shifted(z, tau);
            top = top.max(*k);
        }
        let k0 = libm::exp(e0 - top);
        let mut marginal = self.pi0 * k0;
        for ((k, &w), &p) in self.kernel.iter_mut().zip(self.tau_grid.weights()).zip(&self.pi_tau) {
            *k = libm::exp(*k - top);
            marginal += w * *k * p;
        }
        if !(marginal > 0.0 && marginal.is_finite()) {
            return Err(Error::DegenerateMarginal(marginal));
        }
        let keep = 1.0 - gamma;
        let gain = gamma / marginal;
        self.pi0 *= keep + gain * k0;
        for (p, &k) in self.pi_tau.iter_mut().zip(&self.kernel) {
            *p *= keep + gain * k;
        }
        Ok(())
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn pi_tau(&self) -> &[f64] {
        &self.pi_tau
    }

    pub fn total_mass(&self) -> f64 {
        self.pi0 + self.tau_grid.trapezoid(&self.pi_tau)
    }

    pub fn into_density(self) -> Result<AlternativeDensity> {
        AlternativeDensity::new(self.tau_grid, self.pi_tau, self.pi0.clamp(0.0, 1.0), self.null)
    }
}

/// Runs `config.n_sweeps` passes of predictive recursion over `z`, each in
/// a fresh seeded permutation, with the step index carried across sweeps.
pub fn fit_predictive_recursion(
    z: &[f64],
    null: &NullParams,
    tau_grid: &RealLineGrid,
    config: &PrConfig,
) -> Result<AlternativeDensity> {
    config.validate()?;
    if z.is_empty() {
        return Err(Error::Empty("test statistics"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("test statistics"));
    }
    let mut state = PredictiveRecursion::new(*null, tau_grid.clone(), config.initial_pi0)?;
    let mut rng = substream(config.seed, Stream::Permutation);
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut step = 0u64;
    for _ in 0..config.n_sweeps {
        order.shuffle(&mut rng);
        for &idx in &order {
            step += 1;
            let gamma = libm::pow((step + 1) as f64, -config.gamma_exponent);
            state.step(z[idx], gamma)?;
        }
    }
    state.into_density()
}
