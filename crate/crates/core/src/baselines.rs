//! Benjamini–Hochberg and Storey's adaptive step-up procedures.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::z_to_p;
use crate::twogroups::check_alpha;

/// Default Storey tuning parameter.
pub const STOREY_TUNING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PValueVector(Vec<f64>);

impl PValueVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain {
                name: "p-value",
                value: bad,
                domain: "[0, 1]",
            });
        }
        Ok(Self(p))
    }

    /// p-values from z statistics under the standard normal null.
    pub fn from_z(z: &[f64], two_sided: bool) -> Result<Self> {
        let p = z.iter().map(|&z| z_to_p(z, two_sided)).collect::<Result<Vec<_>>>()?;
        Self::new(p)
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
}

impl TryFrom<Vec<f64>> for PValueVector {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<PValueVector> for Vec<f64> {
    fn from(p: PValueVector) -> Self {
        p.0
    }
}

/// Step-up at level `level` (may exceed 1 for the adaptive variant).
fn step_up(p: &[f64], level: f64) -> Vec<usize> {
    let n = p.len();
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut threshold = None;
    for k in (1..=n).rev() {
        if sorted[k - 1] <= k as f64 * level / n as f64 {
            threshold = Some(sorted[k - 1]);
            break;
        }
    }
    match threshold {
        Some(t) => (0..n).filter(|&i| p[i] <= t).collect(),
        None => Vec::new(),
    }
}

/// Benjamini–Hochberg rejections, as ascending test indices.
pub fn bh(p: &PValueVector, alpha: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    Ok(step_up(p.as_slice(), alpha))
}

/// `min(1, #{p > t} / ((1 − t) n))`, floored at `1/n`.
pub fn storey_pi0(p: &PValueVector, tuning: f64) -> Result<f64> {
    if !(tuning > 0.0 && tuning < 1.0) {
        return Err(Error::Domain {
            name: "tuning",
            value: tuning,
            domain: "(0, 1)",
        });
    }
    let n = p.len();
    if n == 0 {
        return Err(Error::Empty("p-values"));
    }
    let above = p.as_slice().iter().filter(|&&v| v > tuning).count();
    let pi0 = above as f64 / ((1.0 - tuning) * n as f64);
    Ok(pi0.min(1.0).max(1.0 / n as f64))
}

/// BH at level `α / π̂0`.
pub fn storey_bh(p: &PValueVector, alpha: f64, tuning: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    if p.is_empty() {
        return Ok(Vec::new());
    }
    let pi0 = storey_pi0(p, tuning)?;
    Ok(step_up(p.as_slice(), alpha / pi0))
}
