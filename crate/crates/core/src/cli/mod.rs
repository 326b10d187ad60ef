//! Config-driven experiment runner and persistence layer.
//!
//! Exit-code contract of the `simulate` binary: 0 success, 1 validation
//! error, 2 numerical-instability or resolution error, 3 I/O error.

pub mod config;
pub mod study;
pub mod table;

pub use config::{parse_config, parse_config_str, ExperimentConfig, Study};
pub use study::{run_study, run_study_with};
pub use table::{read_csv, ResultTable};

use crate::master::MasterError;
use crate::metrics::MetricsError;
use crate::teleport::TeleportError;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file not found: {path}")]
    MissingFile { path: String },
    #[error("config parse failure: {message}")]
    Parse { message: String },
    #[error("config validation failed:\n{}", .0.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile { .. } | CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<TeleportError> for CliError {
    fn from(e: TeleportError) -> Self {
        match &e {
            TeleportError::InvalidParameter(_)
            | TeleportError::ShapeMismatch(_)
            | TeleportError::InvalidBaseline(_)
            | TeleportError::Fock(_) => CliError::Validation(vec![e.to_string()]),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MasterError> for CliError {
    fn from(e: MasterError) -> Self {
        match &e {
            MasterError::NumericalInstability { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(vec![e.to_string()]),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match &e {
            MetricsError::GridTooCoarse { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(vec![e.to_string()]),
        }
    }
}

impl From<crate::channels::ChannelError> for CliError {
    fn from(e: crate::channels::ChannelError) -> Self {
        CliError::Validation(vec![e.to_string()])
    }
}

/// Output path for a table: the primary table of a study takes the base
/// path; any additional tables get `_<name>` suffixes.
pub fn table_path(base: &Path, table_name: &str, is_primary: bool) -> PathBuf {
    if is_primary {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let ext = base
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}_{table_name}.{ext}"))
}

/// Executes a parsed experiment, writing every completed table immediately.
pub fn execute(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let base: PathBuf = out_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.study.name())));
    let mut written = Vec::new();
    let mut first = true;
    let mut sink = |t: &ResultTable| -> Result<(), CliError> {
        let path = table_path(&base, &t.name, first);
        first = false;
        t.write_csv(&path)?;
        written.push(path);
        Ok(())
    };
    study::run_study_with(cfg, &mut sink)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_contract() {
        assert_eq!(
            CliError::Validation(vec!["x".into()]).exit_code(),
            1
        );
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Io {
                path: "p".into(),
                message: "m".into()
            }
            .exit_code(),
            3
        );
    }

    #[test]
    fn table_paths_for_multi_table_studies() {
        let base = Path::new("out/wigner.csv");
        assert_eq!(table_path(base, "wigner_summary", true), base);
        assert_eq!(
            table_path(base, "grid_t10", false),
            Path::new("out/wigner_grid_t10.csv")
        );
    }
}
