//! Neural Beta prior: network, marginal-likelihood objective and trainer.

mod mlp;
mod objective;
mod train;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use mlp::{MlpModel, OUTPUT_CEILING, OUTPUT_FLOOR};
pub use objective::{loss_and_grad, marginal_loglik, TestDensities};
pub use train::{train, EpochRecord, PriorInput, TrainConfig, TrainedPrior, MIN_TRAIN_TESTS};

/// Per-test Beta parameters: the raw network outputs and the values used
/// downstream, which differ only after auxiliary adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct BetaPriorField {
    a_raw: Vec<f64>,
    b_raw: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    adjusted: bool,
}

#[derive(Serialize, Deserialize)]
struct RawField {
    a_raw: Vec<f64>,
    b_raw: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    adjusted: bool,
}

impl From<BetaPriorField> for RawField {
    fn from(f: BetaPriorField) -> Self {
        RawField {
            a_raw: f.a_raw,
            b_raw: f.b_raw,
            a: f.a,
            b: f.b,
            adjusted: f.adjusted,
        }
    }
}

impl TryFrom<RawField> for BetaPriorField {
    type Error = Error;

    fn try_from(r: RawField) -> Result<Self> {
        let field = BetaPriorField::new(r.a_raw, r.b_raw)?;
        if r.adjusted {
            field.with_adjusted(r.a, r.b)
        } else if r.a != field.a || r.b != field.b {
            Err(Error::Config("unadjusted prior field must have a = a_raw and b = b_raw".into()))
        } else {
            Ok(field)
        }
    }
}

fn check_positive(v: &[f64], name: &'static str) -> Result<()> {
    match v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(&bad) => Err(Error::Domain {
            name,
            value: bad,
            domain: "(0, inf)",
        }),
        None => Ok(()),
    }
}

impl BetaPriorField {
    /// Unadjusted field: `(a, b) = (a_raw, b_raw)`.
    pub fn new(a_raw: Vec<f64>, b_raw: Vec<f64>) -> Result<Self> {
        if a_raw.len() != b_raw.len() {
            return Err(Error::Dimension {
                what: "prior field",
                expected: a_raw.len(),
                got: b_raw.len(),
            });
        }
        check_positive(&a_raw, "a")?;
        check_positive(&b_raw, "b")?;
        Ok(Self {
            a: a_raw.clone(),
            b: b_raw.clone(),
            a_raw,
            b_raw,
            adjusted: false,
        })
    }

    /// Network outputs for every row of `x`.
    pub fn from_model(model: &MlpModel, x: &Matrix) -> Result<Self> {
        let (a, b) = model.forward_batch(x)?.into_iter().unzip();
        Self::new(a, b)
    }

    /// Same raw outputs with replacement `(a, b)`; fails if already adjusted.
    pub fn with_adjusted(self, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if self.adjusted {
            return Err(Error::AlreadyAdjusted);
        }
        for v in [&a, &b] {
            if v.len() != self.a_raw.len() {
                return Err(Error::Dimension {
                    what: "adjusted prior field",
                    expected: self.a_raw.len(),
                    got: v.len(),
                });
            }
        }
        check_positive(&a, "a")?;
        check_positive(&b, "b")?;
        Ok(Self {
            a,
            b,
            adjusted: true,
            ..self
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a_raw(&self) -> &[f64] {
        &self.a_raw
    }

    pub fn b_raw(&self) -> &[f64] {
        &self.b_raw
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn is_adjusted(&self) -> bool {
        self.adjusted
    }

    /// Prior mean `a / (a + b)` of test `i`.
    pub fn prior_mean(&self, i: usize) -> f64 {
        self.a[i] / (self.a[i] + self.b[i])
    }
}
