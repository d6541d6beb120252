use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by the process exit code the CLI maps them to; see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown phoneme id {0}")]
    UnknownPhoneme(u32),

    #[error("id {0} is neither a vowel in the distance matrix nor the null id")]
    UnknownVowel(u32),

    #[error("sample rate {found} Hz does not match the expected {expected} Hz")]
    RateMismatch { found: u32, expected: u32 },

    #[error("division by a degenerate quantity: {0}")]
    Degenerate(String),

    #[error("zero-norm embedding")]
    DegenerateEmbedding,

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("fixture miss in {provider}: {key}")]
    FixtureMiss { provider: &'static str, key: String },

    #[error("provider error on candidate {index}: {source}")]
    Provider {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("candidate {index}: {source}")]
    Candidate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("CTC alignment infeasible: {0}")]
    AlignmentInfeasible(String),

    #[error("DTW band infeasible: {0}")]
    BandInfeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    /// Strips `Provider`/`Candidate`/`Stage` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Provider { source, .. }
            | Error::Candidate { source, .. }
            | Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 invalid input/config, 3 fixture miss,
    /// 4 algorithmic infeasibility, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::FixtureMiss { .. } => 3,
            Error::AlignmentInfeasible(_) | Error::BandInfeasible(_) => 4,
            Error::Internal(_) => 5,
            _ => 2,
        }
    }

    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self.root() {
            Error::InvalidInput(_) => "invalid-input",
            Error::Config(_) => "invalid-config",
            Error::UnknownPhoneme(_) => "unknown-phoneme",
            Error::UnknownVowel(_) => "unknown-vowel",
            Error::RateMismatch { .. } => "rate-mismatch",
            Error::Degenerate(_) => "division-degenerate",
            Error::DegenerateEmbedding => "degenerate-embedding",
            Error::DegenerateSeries(_) => "degenerate-series",
            Error::FixtureMiss { .. } => "fixture-miss",
            Error::AlignmentInfeasible(_) => "alignment-infeasible",
            Error::BandInfeasible(_) => "band-infeasible",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Internal(_) => "internal",
            Error::Provider { .. } | Error::Candidate { .. } | Error::Stage { .. } => {
                unreachable!("root() unwraps wrappers")
            }
        }
    }
}
