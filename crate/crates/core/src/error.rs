use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors shared by every module of the crate.
///
/// The [`Error::class`] string is a stable, machine-parsable tag used by the
/// command line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integration diverged at step {step}: {context}")]
    IntegrationDiverged { step: usize, context: String },
    #[error("no feasible alpha in the line search grid: {0}")]
    NoFeasibleAlpha(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("training diverged at epoch {epoch} (non-finite loss); try a smaller learning rate")]
    TrainingDiverged { epoch: usize },
    #[error("planning failed: {0}")]
    PlanningFailed(String),
    #[error("riccati solver failed: {0}")]
    Riccati(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Wraps the error with a location such as `(s=3, i=17)`.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NotPositiveDefinite(_) => "definiteness",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::IntegrationDiverged { .. } => "integration-diverged",
            Error::NoFeasibleAlpha(_) => "no-feasible-alpha",
            Error::Solver(_) => "solver",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::PlanningFailed(_) => "planning-failed",
            Error::Riccati(_) => "riccati",
            Error::Context { source, .. } => source.class(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Parse(_) => "parse",
        }
    }
}
