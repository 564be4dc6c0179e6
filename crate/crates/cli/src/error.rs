use std::fmt;

use aiwc::characterizer::CharacterizeError;
use aiwc::dataset::DatasetError;
use aiwc::experiments::ExperimentError;
use aiwc::forest::ForestError;
use aiwc::microkernel::{ExecError, NdRangeError, ParseError, TraceError};
use aiwc::tuner::{TuneError, TuneForestError};

/// A failed command, classified by exit code:
/// 2 invalid input, 3 execution failure, 4 I/O, 5 schema mismatch.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Exec(String),
    Io(String),
    Schema(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Exec(_) => 3,
            CliError::Io(_) => 4,
            CliError::Schema(_) => 5,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Prefixes the message with `context` (usually a file name).
    pub fn context(self, context: impl fmt::Display) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{context}: {m}")),
            CliError::Exec(m) => CliError::Exec(format!("{context}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{context}: {m}")),
            CliError::Schema(m) => CliError::Schema(format!("{context}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Exec(m) | CliError::Io(m) | CliError::Schema(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Input(format!("parse error at {e}"))
    }
}

impl From<NdRangeError> for CliError {
    fn from(e: NdRangeError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::MissingArgument(_) | ExecError::UnknownArgument(_) | ExecError::ZeroFuel => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Exec(e.to_string()),
        }
    }
}

impl From<CharacterizeError> for CliError {
    fn from(e: CharacterizeError) -> Self {
        match e {
            CharacterizeError::HistoryLength(_) => CliError::Input(e.to_string()),
            CharacterizeError::EmptyTrace => CliError::Exec(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::SchemaMismatch { .. } => CliError::Schema(e.to_string()),
            ForestError::Io(e) => e.into(),
            ForestError::DegenerateResponse | ForestError::NoOobRows => CliError::Exec(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(e) => e.into(),
            DatasetError::Csv(e) => e.into(),
            DatasetError::Forest(e) => e.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TuneError<ForestError>> for CliError {
    fn from(e: TuneError<ForestError>) -> Self {
        match e {
            TuneError::Objective { params, source } => CliError::from(source).context(params),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TuneForestError> for CliError {
    fn from(e: TuneForestError) -> Self {
        match e {
            TuneForestError::Tune(e) => e.into(),
            TuneForestError::Io(e) => e.into(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => CliError::Input(m),
            ExperimentError::Forest(e) => e.into(),
            ExperimentError::Dataset(e) => e.into(),
            ExperimentError::Tune(e) => e.into(),
            ExperimentError::Csv(e) => e.into(),
            ExperimentError::Io(e) => e.into(),
        }
    }
}
