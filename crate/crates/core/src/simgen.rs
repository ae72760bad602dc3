//! Synthetic benchmark scenarios with known ground truth.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::sigmoid;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Constant,
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltKind {
    #[serde(rename = "ws")]
    WellSeparated,
    #[serde(rename = "ps")]
    PoorlySeparated,
}

impl PriorKind {
    pub const ALL: [PriorKind; 3] = [PriorKind::Constant, PriorKind::Linear, PriorKind::Nonlinear];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Constant => "constant",
            PriorKind::Linear => "linear",
            PriorKind::Nonlinear => "nonlinear",
        }
    }
}

impl AltKind {
    pub const ALL: [AltKind; 2] = [AltKind::WellSeparated, AltKind::PoorlySeparated];

    pub fn name(self) -> &'static str {
        match self {
            AltKind::WellSeparated => "ws",
            AltKind::PoorlySeparated => "ps",
        }
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for AltKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown prior scenario `{s}`")))
    }
}

impl core::str::FromStr for AltKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AltKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown alternative `{s}`")))
    }
}

/// Component means of the well-separated mixture are `±WS_SHIFT`.
pub const WS_SHIFT: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub prior: PriorKind,
    pub alt: AltKind,
    pub n: usize,
    /// Test-level covariate dimension.
    pub k: usize,
    /// Auxiliary feature dimension.
    pub q: usize,
    pub seed: u64,
    /// Standard deviation of the poorly-separated alternative.
    pub ps_scale: f64,
    /// Expected alternative fraction of the nonlinear scenario; sets the
    /// scale of its linear index.
    pub nonlinear_fraction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            prior: PriorKind::Linear,
            alt: AltKind::WellSeparated,
            n: 1000,
            k: 100,
            q: 5,
            seed: 0,
            ps_scale: 3.0,
            nonlinear_fraction: 0.3,
        }
    }
}

impl ScenarioConfig {
    pub fn new(prior: PriorKind, alt: AltKind) -> Self {
        Self {
            prior,
            alt,
            ..Self::default()
        }
    }

    /// `"linear/ws"` style label.
    pub fn label(&self) -> alloc::string::String {
        alloc::format!("{}/{}", self.prior, self.alt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.q == 0 {
            return Err(Error::Config("n, k and q must be positive".into()));
        }
        if !(self.ps_scale.is_finite() && self.ps_scale > 0.0) {
            return Err(Error::Config("ps_scale must be positive".into()));
        }
        let lo = sigmoid(nonlinear_link(0.0));
        if !(self.nonlinear_fraction > lo + 1e-6 && self.nonlinear_fraction < 0.99) {
            return Err(Error::Config(alloc::format!(
                "nonlinear_fraction must lie in ({lo:.4}, 0.99)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub z: Vec<f64>,
    pub x: Matrix,
    pub x_aux: Matrix,
    pub h: Vec<bool>,
    pub prior_prob: Vec<f64>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn n_alternatives(&self) -> usize {
        self.h.iter().filter(|&&h| h).count()
    }
}

fn nonlinear_link(eta: f64) -> f64 {
    libm::sin(eta) + 0.5 * eta * eta - 1.0
}

/// Expected alternative fraction `E[σ(sin η + η²/2 − 1)]` for
/// `η ~ N(0, scale²)`, on a fixed trapezoid rule.
pub fn nonlinear_fraction(scale: f64) -> f64 {
    const N: usize = 801;
    let h = 16.0 / (N - 1) as f64;
    (0..N)
        .map(|i| {
            let u = -8.0 + i as f64 * h;
            libm::exp(-0.5 * u * u) * h * 0.398_942_280_401_432_7 * sigmoid(nonlinear_link(scale * u))
        })
        .sum()
}

/// Scale of the nonlinear index giving the target alternative fraction,
/// by bisection. The fraction increases with the scale from `σ(−1)`.
pub fn nonlinear_scale(target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if nonlinear_fraction(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normal(rng: &mut crate::rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one dataset. Everything is a function of the config, seed
/// included.
pub fn generate(config: &ScenarioConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let (n, k, q) = (config.n, config.k, config.q);
    let mut rng = substream(config.seed, Stream::Data);

    let x_data: Vec<f64> = (0..n * k).map(|_| normal(&mut rng)).collect();
    let x = Matrix::new(n, k, x_data)?;

    let beta: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
    let index: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();

    let logit: Vec<f64> = match config.prior {
        PriorKind::Constant => alloc::vec![0.0; n],
        PriorKind::Linear => index,
        PriorKind::Nonlinear => {
            // rescale β so that Xβ ~ N(0, s²) given β
            let norm = libm::sqrt(beta.iter().map(|b| b * b).sum());
            let s = nonlinear_scale(config.nonlinear_fraction) / norm;
            index.iter().map(|t| nonlinear_link(s * t)).collect()
        }
    };
    let prior_prob: Vec<f64> = logit.iter().map(|&t| sigmoid(t)).collect();

    let mut h = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for &p in &prior_prob {
        let alt = rng.random::<f64>() < p;
        let e = normal(&mut rng);
        let v = if !alt {
            e
        } else {
            match config.alt {
                AltKind::WellSeparated => {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * WS_SHIFT + e
                }
                AltKind::PoorlySeparated => config.ps_scale * e,
            }
        };
        h.push(alt);
        z.push(v);
    }

    // Auxiliary features: ±1 loadings on the standardised prior logit plus
    // unit noise. A constant logit leaves pure noise.
    let mean = logit.iter().sum::<f64>() / n as f64;
    let sd = libm::sqrt(logit.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64);
    let signal: Vec<f64> = if sd > 1e-12 {
        logit.iter().map(|t| (t - mean) / sd).collect()
    } else {
        alloc::vec![0.0; n]
    };
    let loadings: Vec<f64> = (0..q)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut aux = Vec::with_capacity(n * q);
    for s in &signal {
        for w in &loadings {
            aux.push(w * s + normal(&mut rng));
        }
    }
    let x_aux = Matrix::new(n, q, aux)?;

    Ok(SyntheticDataset {
        z,
        x,
        x_aux,
        h,
        prior_prob,
    })
}

/// `(FDP, power)` of a rejection set: false / max(1, rejected) and
/// true / max(1, alternatives).
pub fn true_fdp_power(rejected: &[usize], h: &[bool]) -> Result<(f64, f64)> {
    if let Some(&bad) = rejected.iter().find(|&&i| i >= h.len()) {
        return Err(Error::Dimension {
            what: "rejection index bound",
            expected: h.len(),
            got: bad,
        });
    }
    let true_rej = rejected.iter().filter(|&&i| h[i]).count();
    let false_rej = rejected.len() - true_rej;
    let n_alt = h.iter().filter(|&&v| v).count();
    Ok((
        false_rej as f64 / rejected.len().max(1) as f64,
        true_rej as f64 / n_alt.max(1) as f64,
    ))
}
