use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// A file or directory named by the configuration or the flags is absent.
    Missing { what: &'static str, path: PathBuf },
    Config(String),
    Core(ncm_core::Error),
    /// Some work items failed; the manifest lists them.
    Partial { failed: usize, total: usize, manifest: PathBuf },
    Checks { failed: usize },
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Missing { .. } => "missing-file",
            CliError::Config(_) => "config",
            CliError::Core(e) => e.class(),
            CliError::Partial { .. } => "partial-failure",
            CliError::Checks { .. } => "check-failed",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Missing { .. } | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Missing { what, path } => write!(f, "{what} not found: {}", path.display()),
            CliError::Config(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Partial { failed, total, manifest } => {
                write!(f, "{failed} of {total} trajectories failed; see {}", manifest.display())
            }
            CliError::Checks { failed } => write!(f, "{failed} invariant checks failed"),
        }
    }
}

impl From<ncm_core::Error> for CliError {
    fn from(e: ncm_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn require(what: &'static str, path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            what,
            path: path.to_path_buf(),
        })
    }
}
