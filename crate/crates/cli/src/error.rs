use qrlob::calibration::CalibError;
use qrlob::engine::EngineError;
use qrlob::eventlog::LogError;
use qrlob::facts::FactError;
use qrlob::flow::FlowError;
use qrlob::hawkes::HawkesError;
use qrlob::model::ModelError;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// Prefixes the message with where it happened, keeping the class.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FactError> for CliError {
    fn from(e: FactError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<HawkesError> for CliError {
    fn from(e: HawkesError) -> Self {
        match e {
            HawkesError::NonStationary(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        match e {
            CalibError::ThetaNoConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Calib(c) => c.into(),
            ModelError::Hawkes(h) => h.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Stalled { .. } => CliError::Numerical(e.to_string()),
            EngineError::Model(m) => m.into(),
            EngineError::Hawkes(h) => h.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}
