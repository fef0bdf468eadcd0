use std::path::PathBuf;

/// Errors raised anywhere in the simulation and control stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: line {line}: timestamps not strictly increasing")]
    Ordering { path: PathBuf, line: u64 },

    #[error("{path}: line {line}: value {value} out of range [{lo}, {hi}]")]
    OutOfRange {
        path: PathBuf,
        line: u64,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{path}: unexpected header {found:?}, expected {expected:?}")]
    Schema {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty plan")]
    EmptyPlan,

    #[error("empty series")]
    EmptySeries,

    #[error("series misaligned: {0}")]
    Misaligned(String),

    #[error("infeasible: comfort cannot be met from slot {slot} ({detail})")]
    Infeasible { slot: usize, detail: String },

    #[error("solver failure: {message}")]
    Solver { message: String, log: Vec<String> },

    #[error("covariance is not positive semidefinite")]
    NotPsd,

    #[error("simulation fault at t={t_s} s in {module}: {detail}")]
    SimulationFault {
        t_s: f64,
        module: &'static str,
        detail: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration or input files.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::OutOfRange { .. }
                | Error::Ordering { .. }
                | Error::InvalidArgument(_)
        ) || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
