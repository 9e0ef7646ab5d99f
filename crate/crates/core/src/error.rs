use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point set violates its minimal distance: points {i} and {j} are {dist} apart, declared {min_dist}")]
    MinDistanceViolated {
        i: usize,
        j: usize,
        dist: f64,
        min_dist: f64,
    },

    #[error("random sequential adsorption accepted no point")]
    EmptyPointSet,

    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),

    #[error("no distribution for site {0}")]
    MissingSite(usize),

    #[error("sample kind or length does not match: {0}")]
    SampleMismatch(String),

    #[error("finite differences are ill-conditioned: step halving moved the estimate by {change:e} (tolerance {tol:e})")]
    IllConditioned { change: f64, tol: f64 },

    #[error("quadrature did not converge: error estimate {estimate:e} above target {target:e}")]
    QuadratureNonConvergence { estimate: f64, target: f64 },

    #[error("grid supremum did not converge: refinement changed the value by {change:e} (tolerance {tol:e})")]
    GridNonConvergence { change: f64, tol: f64 },

    #[error("observable does not provide what is needed: {0}")]
    Unsupported(String),

    #[error("value outside the domain of {func}: {value}")]
    Domain { func: &'static str, value: f64 },

    #[error("scale {scale} exceeds the convergence radius d = {d}")]
    OutOfRegime { scale: f64, d: f64 },

    #[error("constant recomputation: {0}")]
    Constants(String),

    #[error("enumeration too large: {configs} configurations (limit {limit})")]
    EnumerationTooLarge { configs: u128, limit: u128 },

    #[error("expected a real value, imaginary part {0:e}")]
    NotReal(f64),

    #[error("zero variance: the centered variable is deterministic")]
    ZeroVariance,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
