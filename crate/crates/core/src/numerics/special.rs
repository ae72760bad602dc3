//! Special functions: digamma, log-Beta, Beta log-density and the normal
//! quantile function.

use crate::error::{Error, Result};

/// Negative of the Euler–Mascheroni constant, `digamma(1)`.
pub const DIGAMMA_ONE: f64 = -0.577_215_664_901_532_9;

/// Below this argument the digamma recurrence is applied before the
/// asymptotic series.
const DIGAMMA_SHIFT: f64 = 6.0;

/// Digamma function ψ(x) for x > 0.
///
/// Shifts the argument above 6 with ψ(x) = ψ(x+1) − 1/x and then sums the
/// asymptotic expansion through the x⁻¹⁴ term.
pub fn digamma(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("digamma argument"));
    }
    if x <= 0.0 {
        return Err(Error::Domain {
            name: "x",
            value: x,
            domain: "(0, inf)",
        });
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < DIGAMMA_SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k) for k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + libm::log(x) - 0.5 * inv - series
}

/// Natural log of the Beta function B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
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

/// Log-density of Beta(a, b) at `lambda`.
pub fn log_beta_pdf(lambda: f64, a: f64, b: f64) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::NonFinite("lambda"));
    }
    if lambda <= 0.0 || lambda >= 1.0 {
        return Err(Error::Domain {
            name: "lambda",
            value: lambda,
            domain: "(0, 1)",
        });
    }
    check_shape(a, b)?;
    Ok(log_beta_pdf_parts(
        libm::log(lambda),
        libm::log1p(-lambda),
        a,
        b,
        ln_beta(a, b),
    ))
}

/// Beta log-density from precomputed `ln λ`, `ln(1 − λ)` and `ln B(a, b)`.
#[inline]
pub(crate) fn log_beta_pdf_parts(ln_lam: f64, ln_one_minus: f64, a: f64, b: f64, lnb: f64) -> f64 {
    (a - 1.0) * ln_lam + (b - 1.0) * ln_one_minus - lnb
}

/// Partial derivatives of the Beta log-density with respect to (a, b):
/// `ln λ − ψ(a) + ψ(a+b)` and `ln(1−λ) − ψ(b) + ψ(a+b)`.
pub fn log_beta_pdf_grad(lambda: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    log_beta_pdf(lambda, a, b)?;
    let psi_ab = digamma_unchecked(a + b);
    Ok((
        libm::log(lambda) - digamma_unchecked(a) + psi_ab,
        libm::log1p(-lambda) - digamma_unchecked(b) + psi_ab,
    ))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal upper tail 1 − Φ(x), accurate for large x.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1), Wichura's AS241.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok(ppnd16(p))
}

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
            + 67265.770_927_008_700)
            * r
            + 45921.953_931_549_871)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_4)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_6;
        let den = ((((((5226.495_278_852_545_9 * r + 28729.085_735_721_943) * r
            + 39307.895_800_092_711)
            * r
            + 21213.794_301_586_596)
            * r
            + 5394.196_021_424_751_1)
            * r
            + 687.187_007_492_057_91)
            * r
            + 42.313_330_701_600_911)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = libm::sqrt(-libm::log(tail));
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_185) * r
            + 0.241_780_725_177_450_61)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_6;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_07)
            * r
            + 0.689_767_334_985_100_0)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_7e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_81)
            * r
            + 0.599_832_206_555_887_94)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
