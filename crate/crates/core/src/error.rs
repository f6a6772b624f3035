use thiserror::Error;

/// Errors raised by the analytic and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model has no jump part")]
    NoJumpPart,
    #[error("operation requires a Brownian perturbation (sigma > 0)")]
    NoPerturbation,
    #[error("operation not available for model kind {0}")]
    WrongKind(&'static str),
    #[error("operation requires zero drift for the pure gamma law")]
    UnsupportedDrift,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("could not bracket the Lundberg root: {0}")]
    BracketFailure(String),
    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },
    #[error("series did not converge after {terms} terms (last term sup-norm {last})")]
    SeriesNotConverged { terms: usize, last: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("point {x} outside grid [{lo}, {hi}]")]
    OutOfGrid { x: f64, lo: f64, hi: f64 },
    #[error("argument out of domain: {0}")]
    OutOfDomain(String),
    #[error("degenerate leading coefficient")]
    DegenerateLeadingCoefficient,
    #[error("repeated roots in the phase-type Lundberg polynomial")]
    RepeatedRoots,
    #[error("root sets have cardinalities {i_card} and {j_card}, expected |I| = |J| + 1")]
    CardinalityMismatch { i_card: usize, j_card: usize },
    #[error("integrand tail not dominated at a_max = {a_max}")]
    TailNotDominated { a_max: f64 },
    #[error("maintenance function is not increasing at {0}")]
    NonBijectiveMaintenance(f64),
    #[error("conditioning on an event of probability {0}")]
    ConditioningOnNull(f64),
    #[error("kernel chain mass fell below {0}")]
    GridUnderflow(f64),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("path exceeded {0} maintenance cycles")]
    HorizonExceeded(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
