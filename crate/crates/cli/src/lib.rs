//! Configuration-driven front end for the nmq simulator.

pub mod config;
pub mod pipeline;
pub mod presets;

use std::path::{Path, PathBuf};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Parse(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("numerical failure in {stage}: {source}")]
    Numerical {
        stage: String,
        #[source]
        source: nmq_core::Error,
    },
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("verification failed")]
    VerifyFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } | CliError::VerifyFailed => 1,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Recovers the run configuration from the `#` header of an output CSV.
pub fn config_from_header(csv: &str) -> Result<RunConfig, CliError> {
    let toml: String = csv
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.strip_prefix("# ").unwrap_or(&l[1..]))
        .collect::<Vec<_>>()
        .join("\n");
    RunConfig::from_toml(&toml)
}
