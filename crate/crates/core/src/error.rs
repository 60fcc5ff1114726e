use thiserror::Error;

/// Errors raised across the sensing, identification and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stiffness {0} is too close to zero to invert the force model")]
    DegenerateStiffness(f64),

    #[error("pressure coefficient {0} is too close to zero to invert the force model")]
    DegeneratePressureCoefficient(f64),

    #[error("coefficients leave the valid envelope at P = {pressure} MPa: {reason}")]
    Envelope { pressure: f64, reason: String },

    #[error("force {0} N is outside the model domain")]
    Domain(f64),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid filter spec: {0}")]
    InvalidFilter(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("constant observed series: {0} undefined")]
    ConstantObserved(&'static str),

    #[error("isotonic load {load} N unreachable within [{x_min}, {x_max}] m")]
    Infeasible { load: f64, x_min: f64, x_max: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("timestamps not strictly increasing at line {line}")]
    NonMonotonicTime { line: u64 },

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this error: 1 for usage or configuration
    /// problems, 2 for bad or unusable data, 3 when a fit fails to converge.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Scenario { source, .. } => source.exit_code(),
            Error::NotConverged(_) => 3,
            Error::Config(_)
            | Error::InvalidBounds(_)
            | Error::InvalidFilter(_)
            | Error::InvalidParameter(_)
            | Error::DegenerateStiffness(_)
            | Error::DegeneratePressureCoefficient(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn in_scenario(self, name: &str) -> Self {
        Error::Scenario {
            scenario: name.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
