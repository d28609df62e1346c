//! Error type for the command-line layer: core estimation errors plus file,
//! format and configuration problems, each mapped to a stable machine code
//! and an exit status.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Estimation/mechanism error from the core library.
    Core(pram_core::Error),
    /// Filesystem problem (missing file, unwritable output, ...).
    Io {
        path: Option<PathBuf>,
        source: std::io::Error,
    },
    /// CSV reading or writing failed at the transport level.
    Csv {
        path: PathBuf,
        source: csv::Error,
    },
    /// JSON (de)serialization failed.
    Json {
        path: Option<PathBuf>,
        source: serde_json::Error,
    },
    /// A value in an input file or flag did not parse or validate.
    Parse {
        context: String,
    },
    /// Relative efficiency against a method whose MSE is zero.
    ZeroDenominator {
        context: String,
    },
}

impl Error {
    pub fn parse(context: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
        }
    }

    /// Stable machine-parsable code, printed as `error[CODE]: message`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(e) => match e {
                pram_core::Error::NotSquare { .. } => "not-square",
                pram_core::Error::NonStochastic { .. } => "non-stochastic",
                pram_core::Error::EntryOutOfRange { .. } => "entry-out-of-range",
                pram_core::Error::Singular { .. } => "singular",
                pram_core::Error::IllConditioned { .. } => "ill-conditioned",
                pram_core::Error::DimensionMismatch { .. } => "dimension-mismatch",
                pram_core::Error::MissingColumn { .. } => "missing-column",
                pram_core::Error::LevelOutOfRange { .. } => "level-out-of-range",
                pram_core::Error::ZeroMarginal { .. } => "zero-marginal",
                pram_core::Error::NonBinaryResponse { .. } => "non-binary-response",
                pram_core::Error::MissingLevel { .. } => "missing-level",
                pram_core::Error::NonFinite { .. } => "non-finite",
                pram_core::Error::SingularJacobian { .. } => "singular-jacobian",
                pram_core::Error::SingularOmega { .. } => "singular-omega",
                pram_core::Error::TooManyFailures { .. } => "too-many-failures",
                pram_core::Error::DegenerateModel { .. } => "degenerate-model",
                pram_core::Error::InvalidConfig { .. } => "invalid-config",
            },
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json { .. } => "json",
            Error::Parse { .. } => "parse",
            Error::ZeroDenominator { .. } => "zero-denominator",
        }
    }

    /// Exit status: 1 for I/O and transport failures, 2 for validation and
    /// configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv { .. } => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Core(e) => write!(f, "{e}"),
            Error::Io { path, source } => match path {
                Some(p) => write!(f, "{}: {source}", p.display()),
                None => write!(f, "{source}"),
            },
            Error::Csv { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Json { path, source } => match path {
                Some(p) => write!(f, "{}: {source}", p.display()),
                None => write!(f, "{source}"),
            },
            Error::Parse { context } => write!(f, "{context}"),
            Error::ZeroDenominator { context } => write!(f, "{context}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<pram_core::Error> for Error {
    fn from(e: pram_core::Error) -> Self {
        Error::Core(e)
    }
}
