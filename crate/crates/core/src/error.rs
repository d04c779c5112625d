use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by estimation, bandwidth selection, simulation and I/O.
///
/// Component indices are zero-based throughout.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {value}: must lie in (0, 1/2]")]
    InvalidBandwidth { value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty kernel window for component {component} at node x = {x}")]
    EmptyWindow { component: usize, x: f64 },

    #[error("local design for component {component} is singular at node x = {x} (condition {condition:e})")]
    SingularPsi {
        component: usize,
        x: f64,
        condition: f64,
    },

    #[error("backfitting did not converge after {iterations} sweeps (last delta {final_delta:e})")]
    NonConvergence {
        iterations: usize,
        final_delta: f64,
        history: Vec<f64>,
    },

    #[error("backfitting system is singular (concurvity); null direction weight per component: {null_direction:?}")]
    Concurvity { null_direction: Vec<f64> },

    #[error("marginal integration for component {component} hit a singular local system at {point:?}")]
    MiSingular { component: usize, point: Vec<f64> },

    #[error("plug-in regression is rank deficient: {block}")]
    PluginSingular { block: String },

    #[error("estimated variance integral for component {component} is not positive ({value:e})")]
    NegativeVarianceIntegral { component: usize, value: f64 },

    #[error("estimated E[Z^2 | X] for component {component} is not positive on [0, 1]")]
    NonPositiveSecondMoment { component: usize },

    #[error("plug-in bandwidths are not available for order {order}")]
    UnsupportedOrder { order: usize },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} in column `{column}` at row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column `{column}` has zero range and cannot be rescaled to [0, 1]")]
    ZeroRange { column: String },

    #[error("log transform of non-positive value {value} in column `{column}` at row {row}")]
    NonPositiveLog { row: usize, column: String, value: f64 },

    #[error("value {value} of column `{column}` at row {row} falls outside the fitted range")]
    OutOfRange { row: usize, column: String, value: f64 },

    #[error("relative prediction error is undefined: evaluation responses are constant")]
    ZeroDenominator,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
