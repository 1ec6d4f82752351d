use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-increasing grid at index {index} ({previous} >= {value})")]
    NonIncreasingGrid { index: usize, previous: f64, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite entry at {0}")]
    NonFinite(String),

    #[error("n ≥ 1 violated: the FRF set has no local responses")]
    EmptySet,

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("mode-count mismatch: expected {expected} rigid-body modes, found {found}")]
    ModeCount { expected: usize, found: usize },

    #[error("rank deficiency of the {what} map at p = {point:?}")]
    RankDeficient { what: &'static str, point: Vec<f64> },

    #[error("singular resolvent at ω = {omega} rad/s")]
    SingularResolvent { omega: f64 },

    #[error("parameter domain violation: {0}")]
    ParamDomain(String),

    #[error("ill-posed linear fractional interconnection: {0}")]
    IllPosed(String),

    #[error("diagonal loop singular at ω = {omega} rad/s: {what}")]
    SingularLoop { omega: f64, what: String },

    #[error("image passes within {distance:.3e} of the critical point at sample {index}")]
    OriginProximity { index: usize, distance: f64 },

    #[error("resolution violation: argument jump of {jump_deg:.1}° at sample {index}")]
    Resolution { index: usize, jump_deg: f64 },

    #[error("well-posedness violated: det(I - A·Ts/2) = 0, offending eigenvalue {eigenvalue}")]
    WellPosedness { eigenvalue: crate::C64 },

    #[error("frequency {omega} rad/s above the Nyquist limit {limit} rad/s")]
    AboveNyquist { omega: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
