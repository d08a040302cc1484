use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid process specification: {0}")]
    InvalidSpec(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("thinning bound violated at t={time}: intensity {intensity} > bound {bound}")]
    IntensityBoundExceeded { time: f64, intensity: f64, bound: f64 },

    #[error("path {path} exceeded {max_jumps} jumps")]
    ExplosionDetected { path: usize, max_jumps: usize },

    #[error("state left the bounding box at t={time}: {state:?}")]
    NonfiniteState { time: f64, state: Vec<f64> },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("time {0} is not on the marginal grid")]
    TimeNotOnGrid(f64),

    #[error("negative probability {value} at t={time}")]
    NegativeProbability { time: f64, value: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("binning does not cover state {0:?}")]
    OutsideBinning(Vec<f64>),

    #[error(
        "flux equation has no solution at t={time}: incoming mass {incoming} into zero-mass state {state:?}"
    )]
    AbsoluteContinuityViolation { time: f64, state: Vec<f64>, incoming: f64 },

    #[error("quadrature diverged: {0}")]
    QuadratureDivergence(String),

    #[error("tilt drift correction diverged: {0}")]
    DriftCorrectionDivergence(String),

    #[error("bin mismatch: {0}")]
    BinMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
