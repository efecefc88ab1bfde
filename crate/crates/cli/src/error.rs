use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::json;
use vortex_core::error::ErrorClass;
use vortex_core::VortexError;

#[derive(Debug)]
pub enum CliError {
    Core(VortexError),
    /// A core failure tied to a file.
    File { path: PathBuf, source: VortexError },
    Validation { kind: &'static str, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn validation(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Validation {
            kind,
            message: message.into(),
        }
    }

    fn core(&self) -> Option<&VortexError> {
        match self {
            CliError::Core(e) | CliError::File { source: e, .. } => Some(e),
            CliError::Validation { .. } => None,
        }
    }

    pub fn class(&self) -> ErrorClass {
        self.core().map_or(ErrorClass::Validation, |e| e.class())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation { kind, .. } => kind,
            CliError::File { source: VortexError::Json(_), .. } => "parse_error",
            _ => self.core().map_or("error", |e| e.kind()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Io => 4,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let class = match self.class() {
            ErrorClass::Validation => "validation",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Io => "io",
        };
        let mut v = json!({
            "error": self.kind(),
            "class": class,
            "message": self.to_string(),
        });
        if let CliError::File { path, .. } = self {
            v["path"] = json!(path.display().to_string());
        }
        v
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::File { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Validation { message, .. } => f.write_str(message),
        }
    }
}

impl From<VortexError> for CliError {
    fn from(e: VortexError) -> Self {
        CliError::Core(e)
    }
}

/// Attaches `path` to a core error.
pub fn at(path: &Path) -> impl FnOnce(VortexError) -> CliError + '_ {
    move |source| CliError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Attaches `path` to a std I/O error.
pub fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::File {
        path: path.to_path_buf(),
        source: VortexError::Io(e),
    }
}
