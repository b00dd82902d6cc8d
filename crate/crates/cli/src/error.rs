use std::fmt;
use std::path::{Path, PathBuf};

use georeg_core::align::AlignError;
use georeg_core::config::ConfigError;
use georeg_core::eval::EvalError;
use georeg_core::filter::FilterError;
use georeg_core::graph::ParseError;
use georeg_core::pipeline::PipelineError;
use georeg_core::projection::ProjectionError;
use georeg_core::sim::SimError;
use georeg_core::tables::TableError;
use georeg_core::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Missing or malformed input, unwritable output.
    Input,
    /// A solver or filter could not produce a result.
    Numerical,
    /// Invalid flag or config file value.
    Config,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Input => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Config => 4,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Input => "input",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Config => "config",
        }
    }
}

/// Printed as a single `key=value` line on standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            file: None,
            line: None,
            column: None,
            key: None,
            message: message.into(),
        }
    }

    pub fn in_file(mut self, path: &Path) -> Self {
        self.file = Some(path.to_path_buf());
        self
    }

    pub fn at(mut self, line: usize, column: usize) -> Self {
        self.line = Some(line);
        self.column = Some(column);
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    pub fn io(path: &Path, err: &std::io::Error) -> Self {
        Self::new(ErrorKind::Input, err.to_string()).in_file(path)
    }

    pub fn table(path: &Path, err: TableError) -> Self {
        Self::new(ErrorKind::Input, err.message)
            .in_file(path)
            .at(err.line, err.column)
    }

    pub fn graph_file(path: &Path, err: ParseError) -> Self {
        Self::new(ErrorKind::Input, err.message)
            .in_file(path)
            .at(err.line, err.column)
    }

    /// Config errors from a file; overrides from flags have no file line.
    pub fn config(path: Option<&Path>, err: ConfigError) -> Self {
        let mut e = match &err {
            ConfigError::Syntax { line, column, message } => {
                Self::new(ErrorKind::Input, message.clone()).at(*line, *column)
            }
            ConfigError::Value { message, .. } => Self::new(ErrorKind::Config, message.clone()),
            ConfigError::UnknownKey { line, .. } => {
                let e = Self::new(ErrorKind::Config, "unknown key");
                if *line > 0 {
                    e.at(*line, 1)
                } else {
                    e
                }
            }
        };
        e.key = err.key().map(str::to_string);
        e.file = path.map(Path::to_path_buf);
        e
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error kind={}", self.kind.as_str())?;
        if let Some(file) = &self.file {
            write!(f, " file={:?}", file.display().to_string())?;
        }
        if let Some(line) = self.line {
            write!(f, " line={line}")?;
        }
        if let Some(column) = self.column {
            write!(f, " col={column}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " key={key}")?;
        }
        write!(f, " message={:?}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        let kind = match e {
            GraphError::Underconstrained(_) | GraphError::NotPositiveDefinite { .. } | GraphError::NonFinite(_) => {
                ErrorKind::Numerical
            }
            GraphError::InvalidArgument(_) => ErrorKind::Config,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        let kind = match e {
            FilterError::InvalidConfig(_) => ErrorKind::Config,
            FilterError::CholeskyFailed { .. } | FilterError::SingularInnovation { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        let kind = match e {
            AlignError::Degenerate(_) => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Graph(e) => e.into(),
            PipelineError::Align(e) => e.into(),
            PipelineError::Filter(e) => e.into(),
            PipelineError::NoPriors { .. } => Self::new(ErrorKind::Input, e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match e {
            EvalError::NoMatches => ErrorKind::Input,
            _ => ErrorKind::Config,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ProjectionError> for CliError {
    fn from(e: ProjectionError) -> Self {
        match e {
            ProjectionError::Graph(e) => e.into(),
            ProjectionError::CellSize(_) | ProjectionError::TooLarge { .. } => {
                Self::new(ErrorKind::Config, e.to_string())
            }
            _ => Self::new(ErrorKind::Input, e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(e) => Self::config(None, e),
            SimError::Graph(e) => e.into(),
            SimError::Align(e) => e.into(),
            SimError::EmptyPath | SimError::InvalidPath(_) => Self::new(ErrorKind::Config, e.to_string()),
            SimError::CountMismatch { .. } => Self::new(ErrorKind::Numerical, e.to_string()),
        }
    }
}
