//! Special functions, quadrature grids and probability primitives.

pub mod grid;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grid::{make_lambda_grid, RealLineGrid, UnitIntervalGrid};
pub use special::{digamma, ln_beta, log_beta_pdf, normal_cdf, normal_quantile, normal_sf};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// p-values are clamped into `[P_FLOOR, 1 − P_FLOOR]` before the inverse
/// normal transform so that z stays finite.
pub const P_FLOOR: f64 = 1e-15;

/// Location and scale of the Gaussian null density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNull", into = "RawNull")]
pub struct NullParams {
    mu: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNull {
    mu: f64,
    sigma: f64,
}

impl TryFrom<RawNull> for NullParams {
    type Error = Error;

    fn try_from(raw: RawNull) -> Result<Self> {
        NullParams::new(raw.mu, raw.sigma)
    }
}

impl From<NullParams> for RawNull {
    fn from(p: NullParams) -> Self {
        RawNull {
            mu: p.mu,
            sigma: p.sigma,
        }
    }
}

impl NullParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::NonFinite("null parameters"));
        }
        if sigma <= 0.0 {
            return Err(Error::Domain {
                name: "sigma",
                value: sigma,
                domain: "(0, inf)",
            });
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// N(x | μ + shift, σ²) without input validation.
    #[inline]
    pub(crate) fn density_shifted(&self, x: f64, shift: f64) -> f64 {
        gaussian_pdf(x, self.mu + shift, self.sigma)
    }

    /// Log of the kernel above without its normalising constant.
    #[inline]
    pub(crate) fn log_kernel_shifted(&self, x: f64, shift: f64) -> f64 {
        let u = (x - self.mu - shift) / self.sigma;
        -0.5 * u * u
    }
}

impl Default for NullParams {
    fn default() -> Self {
        Self::standard()
    }
}

#[inline]
pub(crate) fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    INV_SQRT_2PI / sd * libm::exp(-0.5 * u * u)
}

/// Null density N(x | μ, σ²).
pub fn normal_pdf(x: f64, params: &NullParams) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("normal_pdf argument"));
    }
    Ok(params.density_shifted(x, 0.0))
}

/// Converts a p-value to a z statistic.
///
/// One-sided: `z = Φ⁻¹(1 − p)`, so small p gives large positive z.
/// Two-sided: `z = Φ⁻¹(1 − p/2) ≥ 0`; the sign of the original effect is
/// not recoverable from p and is reported as positive.
/// The tail probability is clamped to `[1e-15, 1 − 1e-15]` first, which is lossy at the ends.
pub fn p_to_z(p: f64, two_sided: bool) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1]",
        });
    }
    let tail = if two_sided { 0.5 * p } else { p };
    // Φ⁻¹(1 − t) = −Φ⁻¹(t); 1 − t is exact for t ≥ 1/2
    if tail <= 0.5 {
        Ok(-special::normal_quantile(tail.max(P_FLOOR))?)
    } else {
        special::normal_quantile((1.0 - tail).max(P_FLOOR))
    }
}

/// Converts a z statistic to a p-value under the standard normal null.
/// Two-sided: `2 Φ(−|z|)`; one-sided: `1 − Φ(z)`.
pub fn z_to_p(z: f64, two_sided: bool) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::NonFinite("z statistic"));
    }
    Ok(if two_sided {
        (2.0 * normal_sf(z.abs())).min(1.0)
    } else {
        normal_sf(z)
    })
}

/// `ln σ(t)` without overflow.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    -softplus(-t)
}

/// `ln(1 + eᵗ)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + libm::log1p(libm::exp(-t))
    } else {
        libm::log1p(libm::exp(t))
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}
