//! End-to-end methods: density estimation, prior fitting and selection.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{bh, storey_bh, PValueVector, STOREY_TUNING};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{make_lambda_grid, NullParams, RealLineGrid};
use crate::prior::{train, BetaPriorField, PriorInput, TestDensities, TrainConfig, TrainedPrior};
use crate::recursion::{fit_predictive_recursion, AlternativeDensity, PrConfig};
use crate::regression::{adjust, fit_regression, log_raw, BivariateRegression};
use crate::twogroups::{posterior_fixed_lambda, select_discoveries, PosteriorScratch, PosteriorVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "bh")]
    Bh,
    #[serde(rename = "sbh")]
    Sbh,
    /// Two-groups model with a single prior `λ = 1 − π̂₀`, no covariates.
    #[serde(rename = "twogroups")]
    TwoGroups,
    /// Network prior on X only, no auxiliary adjustment.
    #[serde(rename = "nn-only")]
    NnOnly,
    /// Network prior on `[X, X^a]`.
    #[serde(rename = "neurt-b")]
    NeurtB,
    /// Network prior on X, then regression adjustment on X^a.
    #[serde(rename = "neurt-a")]
    NeurtA,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Bh,
        Method::Sbh,
        Method::TwoGroups,
        Method::NnOnly,
        Method::NeurtB,
        Method::NeurtA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bh => "bh",
            Method::Sbh => "sbh",
            Method::TwoGroups => "twogroups",
            Method::NnOnly => "nn-only",
            Method::NeurtB => "neurt-b",
            Method::NeurtA => "neurt-a",
        }
    }

    pub fn needs_covariates(self) -> bool {
        matches!(self, Method::NnOnly | Method::NeurtA | Method::NeurtB)
    }

    pub fn needs_aux(self) -> bool {
        matches!(self, Method::NeurtA | Method::NeurtB)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(alloc::format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub null: NullParams,
    pub recursion: PrConfig,
    pub train: TrainConfig,
    /// z to p conversion for the p-value baselines.
    pub two_sided: bool,
    pub storey_tuning: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            null: NullParams::standard(),
            recursion: PrConfig::default(),
            train: TrainConfig::default(),
            two_sided: true,
            storey_tuning: STOREY_TUNING,
        }
    }
}

impl PipelineConfig {
    /// Same configuration with every random component keyed to `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.recursion.seed = seed;
        c.train.seed = seed;
        c
    }
}

/// Inputs of one multiple-testing problem.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub z: &'a [f64],
    /// Observed p-values, used by the p-value methods instead of converting `z`.
    pub p: Option<&'a [f64]>,
    pub x: Option<&'a Matrix>,
    pub x_aux: Option<&'a Matrix>,
}

impl<'a> Problem<'a> {
    fn covariates(&self, method: Method) -> Result<&'a Matrix> {
        self.x
            .ok_or_else(|| Error::Config(alloc::format!("test-level covariates required by {method}")))
    }

    fn aux(&self, method: Method) -> Result<&'a Matrix> {
        self.x_aux
            .ok_or_else(|| Error::Config(alloc::format!("auxiliary covariates required by {method}")))
    }

    fn check(&self) -> Result<()> {
        if self.z.is_empty() {
            return Err(Error::Empty("test statistics"));
        }
        if self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("test statistics"));
        }
        if let Some(p) = self.p {
            if p.len() != self.z.len() {
                return Err(Error::Dimension {
                    what: "p-values",
                    expected: self.z.len(),
                    got: p.len(),
                });
            }
        }
        for m in [self.x, self.x_aux].into_iter().flatten() {
            if m.rows() != self.z.len() {
                return Err(Error::Dimension {
                    what: "covariate rows",
                    expected: self.z.len(),
                    got: m.rows(),
                });
            }
        }
        Ok(())
    }
}

/// Output of fitting one method, ready to be thresholded at any level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fitted {
    PValues {
        method: Method,
        p: PValueVector,
        storey_tuning: f64,
    },
    Posterior {
        method: Method,
        posterior: PosteriorVector,
        /// Per-test prior parameters for the covariate methods.
        field: Option<BetaPriorField>,
        regression: Option<BivariateRegression>,
    },
}

impl Fitted {
    pub fn method(&self) -> Method {
        match self {
            Fitted::PValues { method, .. } | Fitted::Posterior { method, .. } => *method,
        }
    }

    /// Rejected indices at level `alpha`, ascending.
    pub fn select(&self, alpha: f64) -> Result<Vec<usize>> {
        let mut rej = match self {
            Fitted::PValues { method: Method::Sbh, p, storey_tuning } => storey_bh(p, alpha, *storey_tuning)?,
            Fitted::PValues { p, .. } => bh(p, alpha)?,
            Fitted::Posterior { posterior, .. } => select_discoveries(posterior, alpha)?.rejected,
        };
        rej.sort_unstable();
        Ok(rej)
    }
}

/// Shared intermediate fits: the alternative density and the network
/// trained on X alone, each computed at most once per problem.
#[derive(Debug, Default)]
pub struct FitCache {
    density: Option<(AlternativeDensity, TestDensities)>,
    x_prior: Option<TrainedPrior>,
    stacked_prior: Option<TrainedPrior>,
}

impl FitCache {
    /// Cache seeded with a previously fitted density, skipping the recursion.
    pub fn with_density(density: AlternativeDensity, z: &[f64]) -> Result<Self> {
        let dens = test_densities(&density, z)?;
        Ok(FitCache {
            density: Some((density, dens)),
            ..FitCache::default()
        })
    }

    pub fn density(&self) -> Option<&AlternativeDensity> {
        self.density.as_ref().map(|d| &d.0)
    }

    pub fn x_prior(&self) -> Option<&TrainedPrior> {
        self.x_prior.as_ref()
    }

    pub fn stacked_prior(&self) -> Option<&TrainedPrior> {
        self.stacked_prior.as_ref()
    }
}

/// Predictive-recursion density and the per-test `(f0, f1)` values.
pub fn fit_density(z: &[f64], config: &PipelineConfig) -> Result<(AlternativeDensity, TestDensities)> {
    let grid = RealLineGrid::for_null(&config.null);
    let density = fit_predictive_recursion(z, &config.null, &grid, &config.recursion)?;
    let dens = test_densities(&density, z)?;
    Ok((density, dens))
}

fn test_densities(density: &AlternativeDensity, z: &[f64]) -> Result<TestDensities> {
    let (f0, f1) = z
        .iter()
        .map(|&v| density.density_pair(v))
        .collect::<Result<(Vec<_>, Vec<_>)>>()?;
    TestDensities::new(f0, f1)
}

fn field_posterior(field: &BetaPriorField, dens: &TestDensities, nodes: usize) -> Result<PosteriorVector> {
    let grid = make_lambda_grid(nodes)?;
    let mut scratch = PosteriorScratch::new(grid.len());
    let w = (0..field.len())
        .map(|i| scratch.posterior(field.a()[i], field.b()[i], dens.f0()[i], dens.f1()[i], &grid))
        .collect::<Result<Vec<_>>>()?;
    PosteriorVector::new(w)
}

/// Fits one method, reusing and filling `cache`.
pub fn fit_method(method: Method, problem: &Problem<'_>, config: &PipelineConfig, cache: &mut FitCache) -> Result<Fitted> {
    problem.check()?;
    if let Method::Bh | Method::Sbh = method {
        return Ok(Fitted::PValues {
            method,
            p: match problem.p {
                Some(p) => PValueVector::new(p.to_vec())?,
                None => PValueVector::from_z(problem.z, config.two_sided)?,
            },
            storey_tuning: config.storey_tuning,
        });
    }
    if cache.density.is_none() {
        cache.density = Some(fit_density(problem.z, config)?);
    }
    let (density, dens) = cache.density.as_ref().unwrap();
    let nodes = config.train.lambda_grid_nodes;
    match method {
        Method::TwoGroups => {
            let lambda = (1.0 - density.pi0()).clamp(0.0, 1.0);
            let w = (0..dens.len())
                .map(|i| posterior_fixed_lambda(lambda, dens.f0()[i], dens.f1()[i]))
                .collect::<Result<Vec<_>>>()?;
            Ok(Fitted::Posterior {
                method,
                posterior: PosteriorVector::new(w)?,
                field: None,
                regression: None,
            })
        }
        Method::NnOnly | Method::NeurtA => {
            let x = problem.covariates(method)?;
            if cache.x_prior.is_none() {
                cache.x_prior = Some(train(PriorInput::Covariates(x), dens, &config.train)?);
            }
            let field = cache.x_prior.as_ref().unwrap().field.clone();
            let (field, regression) = if method == Method::NeurtA {
                let aux = problem.aux(method)?;
                let (la, lb) = log_raw(&field);
                let reg = fit_regression(&la, &lb, aux)?;
                (adjust(field, &reg, aux)?, Some(reg))
            } else {
                (field, None)
            };
            Ok(Fitted::Posterior {
                method,
                posterior: field_posterior(&field, dens, nodes)?,
                field: Some(field),
                regression,
            })
        }
        Method::NeurtB => {
            let x = problem.covariates(method)?;
            let aux = problem.aux(method)?;
            if cache.stacked_prior.is_none() {
                cache.stacked_prior = Some(train(PriorInput::Stacked { x, aux }, dens, &config.train)?);
            }
            let field = cache.stacked_prior.as_ref().unwrap().field.clone();
            Ok(Fitted::Posterior {
                method,
                posterior: field_posterior(&field, dens, nodes)?,
                field: Some(field),
                regression: None,
            })
        }
        Method::Bh | Method::Sbh => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, true_fdp_power, AltKind, PriorKind, ScenarioConfig};

    fn small_problem(seed: u64) -> crate::simgen::SyntheticDataset {
        generate(&ScenarioConfig {
            n: 300,
            k: 5,
            seed,
            ..ScenarioConfig::new(PriorKind::Linear, AltKind::WellSeparated)
        })
        .unwrap()
    }

    fn quick_config() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.train.hidden_layers = alloc::vec![8];
        c.train.max_epochs = 20;
        c.recursion.n_sweeps = 3;
        c
    }

    #[test]
    fn every_method_fits_and_selects() {
        let d = small_problem(1);
        let problem = Problem {
            z: &d.z,
            p: None,
            x: Some(&d.x),
            x_aux: Some(&d.x_aux),
        };
        let mut cache = FitCache::default();
        for m in Method::ALL {
            let fit = fit_method(m, &problem, &quick_config(), &mut cache).unwrap();
            assert_eq!(fit.method(), m);
            let rej = fit.select(0.1).unwrap();
            let (fdp, _) = true_fdp_power(&rej, &d.h).unwrap();
            assert!(fdp <= 1.0);
            assert!(rej.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(cache.x_prior().is_some() && cache.stacked_prior().is_some());
    }

    #[test]
    fn covariate_methods_need_covariates() {
        let d = small_problem(2);
        let problem = Problem {
            z: &d.z,
            p: None,
            x: None,
            x_aux: None,
        };
        let mut cache = FitCache::default();
        assert!(fit_method(Method::NnOnly, &problem, &quick_config(), &mut cache).is_err());
        assert!(fit_method(Method::TwoGroups, &problem, &quick_config(), &mut cache).is_ok());
    }

    #[test]
    fn observed_p_values_bypass_conversion() {
        let z = [3.0, 2.5, 0.1, -0.2];
        let p = [0.01, 0.02, 0.04, 0.9];
        let problem = Problem {
            z: &z,
            p: Some(&p),
            x: None,
            x_aux: None,
        };
        let fit = fit_method(Method::Bh, &problem, &quick_config(), &mut FitCache::default()).unwrap();
        assert_eq!(fit.select(0.05).unwrap(), alloc::vec![0, 1]);
        let short = Problem { p: Some(&p[..2]), ..problem };
        assert!(fit_method(Method::Bh, &short, &quick_config(), &mut FitCache::default()).is_err());
    }

    #[test]
    fn stored_density_reproduces_the_fit() {
        let d = small_problem(3);
        let problem = Problem {
            z: &d.z,
            p: None,
            x: None,
            x_aux: None,
        };
        let mut cache = FitCache::default();
        let a = fit_method(Method::TwoGroups, &problem, &quick_config(), &mut cache).unwrap();
        let mut reused = FitCache::with_density(cache.density().unwrap().clone(), &d.z).unwrap();
        let b = fit_method(Method::TwoGroups, &problem, &quick_config(), &mut reused).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ihw".parse::<Method>().is_err());
    }
}
