use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Harness failures. `Display` renders the machine-parsable
/// `E:<module>:<code>: message` form.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("E:config:{code}: {path}: {msg}")]
    Config { code: &'static str, path: String, msg: String },

    #[error("E:{module}:{code}: {msg}")]
    Validation { module: &'static str, code: &'static str, msg: String },

    #[error("E:core:{code}: {0}", code = .0.code())]
    Core(#[from] postconc_core::Error),

    #[error("E:io:{code}: {}: {source}", .path.display())]
    Io { code: &'static str, path: PathBuf, source: std::io::Error },

    #[error("E:{module}:{code}: {msg}")]
    Runtime { module: &'static str, code: &'static str, msg: String },
}

impl HarnessError {
    pub fn validation(module: &'static str, code: &'static str, msg: impl Into<String>) -> Self {
        HarnessError::Validation { module, code, msg: msg.into() }
    }

    pub fn runtime(module: &'static str, code: &'static str, msg: impl Into<String>) -> Self {
        HarnessError::Runtime { module, code, msg: msg.into() }
    }

    /// 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Validation { .. } => 1,
            _ => 2,
        }
    }
}

/// Reclassifies a core error raised while checking input as a validation error.
pub fn invalid(module: &'static str, e: postconc_core::Error) -> HarnessError {
    HarnessError::Validation { module, code: e.code(), msg: e.to_string() }
}
