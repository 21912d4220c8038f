use std::path::PathBuf;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can surface. Variants map onto CLI exit classes
/// through [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("unsupported by provider: {0}")]
    Unsupported(String),

    #[error("malformed model output: {0}")]
    MalformedOutput(String),

    #[error("search backend error: {0}")]
    SearchBackend(String),

    #[error("dependency cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("node `{node}` depends on unknown node `{missing}`")]
    DanglingDependency { node: String, missing: String },

    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("validation failed: {}", summarize_reports(.0))]
    Validation(Vec<ValidationReport>),

    #[error("node `{node}` is missing input `{key}`")]
    MissingInput { node: String, key: String },

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("source is empty")]
    EmptySource,

    #[error("scoring target is empty")]
    EmptyTarget,

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaRange(f64),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("refinement changed the interface of `{node}`: {detail}")]
    InterfaceDrift { node: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn summarize_reports(reports: &[ValidationReport]) -> String {
    reports
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(" | then | ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code class: 2 usage/validation, 3 provider/backend, 4 storage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider(_)
            | Error::Unsupported(_)
            | Error::MalformedOutput(_)
            | Error::SearchBackend(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
