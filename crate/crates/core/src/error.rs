use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("undefined posterior: null and alternative densities are both zero")]
    UndefinedPosterior,

    #[error("no signal component estimated: continuous mixing mass is zero")]
    NoSignalMass,

    #[error("degenerate marginal density (quadrature total {0} is not positive)")]
    DegenerateMarginal(f64),

    #[error("non-finite loss at test index {index}")]
    NonFiniteLoss { index: usize },

    #[error("rank-deficient design: {column} is a linear combination of [{}]", .depends_on.join(", "))]
    RankDeficient {
        column: String,
        depends_on: Vec<String>,
    },

    #[error("too few observations: n = {n}, need at least {min}")]
    TooFew { n: usize, min: usize },

    #[error("prior field has already been adjusted")]
    AlreadyAdjusted,
}
