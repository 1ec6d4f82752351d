//! Batch driver behind the `autotune` binary: FRF synthesis, tuning and
//! analysis runs with JSON reports and CSV plot data.

pub mod commands;
pub mod config;
pub mod export;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{analyze, synth, tune, Outcome};
pub use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(autotune_core::Error),

    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON output: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<autotune_core::Error> for CliError {
    fn from(e: autotune_core::Error) -> Self {
        match e {
            autotune_core::Error::Io { path, source } => CliError::io(&path, source),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::NotFound(path.to_path_buf())
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    /// Every error is an input or environment problem.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Parse `AUTOTUNE_THREADS`; `None` leaves the thread count to the runtime.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!("AUTOTUNE_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(thread_cap(None).unwrap(), None);
        assert_eq!(thread_cap(Some("4")).unwrap(), Some(4));
        assert!(thread_cap(Some("0")).is_err());
        assert!(thread_cap(Some("many")).is_err());
    }

    #[test]
    fn missing_files_map_to_not_found() {
        let e = CliError::io(Path::new("nope.json"), std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(e.to_string(), "file not found: nope.json");
        assert_eq!(e.exit_code(), 2);
    }
}
