use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {constraint} (got {value})")]
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },

    #[error("volume fraction {rho} is outside the law domain: {reason}")]
    Domain { rho: f64, reason: &'static str },

    #[error("exponent {exponent:.3e} overflows double precision at rho = {rho}")]
    Overflow { rho: f64, exponent: f64 },

    #[error("vacuum: rho = {rho:e} below floor {floor:e}")]
    Vacuum { rho: f64, floor: f64 },

    #[error(
        "quadrature failed to reach tolerance {tol:e} on [{lo}, {hi}] (estimate {estimate:e})"
    )]
    Quadrature {
        lo: f64,
        hi: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("grid: {0}")]
    Grid(String),

    #[error("input to the inverse Laplacian has mean {mean:e} (l1 norm {l1:e})")]
    NonZeroMean { mean: f64, l1: f64 },

    #[error("time step {dt:e} fell below dt_min {dt_min:e}")]
    Stall { dt: f64, dt_min: f64 },

    #[error("max rho/phi_star = {ratio} reached the packing bound")]
    ConstraintBreach { ratio: f64 },

    #[error("viscous solve did not converge: residual {residual:e} after {iterations} iterations")]
    ViscousSolve { iterations: usize, residual: f64 },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("unsupported snapshot version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("sweep: {0}")]
    Sweep(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Errors that a smaller time step may cure.
    pub fn is_step_recoverable(&self) -> bool {
        match self {
            Error::Domain { .. } | Error::Overflow { .. } | Error::ConstraintBreach { .. } => true,
            Error::Vacuum { .. } | Error::ViscousSolve { .. } => true,
            Error::AtTime { source, .. } => source.is_step_recoverable(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
