use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bandwidth h = {h} is not admissible for the {family} kernel")]
    InvalidBandwidth { family: &'static str, h: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series did not converge within {z_max} terms")]
    Truncation { z_max: u64 },

    #[error("evaluation support could not be certified below {eps} within {max_support} points")]
    SupportCertification { eps: f64, max_support: u64 },

    #[error("could not bracket the CoM-Poisson rate for mean {x} and dispersion {nu}")]
    Bracket { x: u64, nu: f64 },

    #[error(
        "CoM-Poisson rate solver stalled for mean {x} and dispersion {nu} (residual {residual:e})"
    )]
    SolverStalled { x: u64, nu: f64, residual: f64 },

    #[error("degenerate configuration: normalizing constant is {0}")]
    DegenerateNormalizer(f64),

    #[error("sample is empty")]
    EmptySample,

    #[error("cross-validation requires at least 2 observations, got {0}")]
    SampleTooSmall(usize),

    #[error("no admissible bandwidth in the grid")]
    NoAdmissibleBandwidth,

    #[error("target pmf vanishes at x = {0}")]
    ZeroTargetMass(u64),

    #[error("replication {index} (seed {seed}) failed: {source}")]
    Replication {
        index: usize,
        seed: u64,
        source: Box<Error>,
    },
}
