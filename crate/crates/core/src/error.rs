use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported encoding ({detail})")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("{path}: recording contains no samples")]
    EmptyAudio { path: PathBuf },

    #[error("silent segment: {0}")]
    SilentSegment(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },

    #[error("no signal detected: {0}")]
    NoSignal(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate projection: vector coincides with the PCA mean")]
    DegenerateProjection,

    #[error("zero total variance: all embeddings are identical")]
    ZeroVariance,

    #[error("indistinguishable clusters: {0} and {1} share a centroid")]
    IndistinguishableClusters(String, String),

    #[error("bridge: {0}")]
    Bridge(#[from] BridgeError),

    #[error("{path}:{line}: {message}")]
    Annotation { path: PathBuf, line: u64, message: String },

    #[error("missing files:\n{}", .0.iter().map(|p| format!("  {}", p.display())).collect::<Vec<_>>().join("\n"))]
    MissingFiles(Vec<PathBuf>),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Failures of the external embedding bridge and its exchange files.
#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("cannot launch `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("`{command}` exited with {status}: {stderr}")]
    Exit {
        command: String,
        status: String,
        stderr: String,
    },

    #[error("segment {segment}: expected dimension {expected}, got {got}")]
    Dimension {
        segment: String,
        expected: usize,
        got: usize,
    },

    #[error("incomplete response: no vector for segment {0}")]
    Incomplete(String),

    #[error("response names unknown segment {0}")]
    UnknownSegment(String),

    #[error("duplicate segment {0} in response")]
    Duplicate(String),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 bridge.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Bridge(_) => 3,
            _ => 2,
        }
    }
}
