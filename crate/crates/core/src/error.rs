use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (valid: 0..{len})")]
    Index { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inverse kinematics gave up; carries the best position residual seen (m).
    #[error("inverse kinematics did not converge (best residual {residual:.3e} m)")]
    NoConvergence { residual: f64 },

    #[error("non-finite {what} at iteration {iteration}")]
    Numerical { iteration: usize, what: &'static str },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("initialization failed at via-point '{via}': {source}")]
    Initialization {
        via: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}", fmt_parse(.path, .line, .message))]
    Parse {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_parse(path: &Option<PathBuf>, line: &Option<usize>, message: &str) -> String {
    let mut out = String::from("parse error");
    if let Some(p) = path {
        out.push_str(&format!(" in {}", p.display()));
    }
    if let Some(l) = line {
        out.push_str(&format!(" at line {l}"));
    }
    out.push_str(": ");
    out.push_str(message);
    out
}

impl Error {
    pub(crate) fn parse(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Attach a file path to a parse error that was produced from an in-memory string.
    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(path.into()),
                line,
                message,
            },
            other => other,
        }
    }

    pub(crate) fn from_toml(src: &str, err: toml::de::Error) -> Self {
        let line = err
            .span()
            .map(|span| {
                let end = span.start.min(src.len());
                src.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
            });
        Error::parse(line, err.message().trim().to_string())
    }
}
