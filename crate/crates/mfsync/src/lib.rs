//! Experiment runner around `mfsync-core`: TOML configuration, subcommand
//! dispatch and deterministic CSV artifacts.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

pub use config::{parse_config, print_config, ConfigError, ExperimentConfig, Subcommand};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "MFSYNC_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Domain(mfsync_core::Error),
    Io(io::Error),
}

impl CliError {
    /// 0 ok, 1 domain or I/O failure, 2 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Domain(_) => "domain",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable record for stderr.
    pub fn to_json(&self) -> String {
        let line = match self {
            CliError::Config(e) => e.line,
            _ => None,
        };
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "line": line,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Domain(e) => e.fmt(f),
            CliError::Io(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<mfsync_core::Error> for CliError {
    fn from(e: mfsync_core::Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Command-line overrides applied on top of the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Output root used when neither `--out` nor `run.out` is given.
    pub out_root: Option<PathBuf>,
}

/// Folds overrides into the configuration and picks the output directory.
pub fn resolve(
    cmd: Subcommand,
    mut config: ExperimentConfig,
    overrides: &Overrides,
) -> Result<(ExperimentConfig, PathBuf), CliError> {
    if let Some(want) = config.run.subcommand {
        if want != cmd {
            return Err(ConfigError {
                line: None,
                message: format!("configuration is for `{want}`, not `{cmd}`"),
            }
            .into());
        }
    }
    config.run.subcommand = Some(cmd);
    if let Some(seed) = overrides.seed {
        config.run.seed = seed;
    }
    let out = match (&overrides.out, &config.run.out) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => overrides
            .out_root
            .clone()
            .unwrap_or_else(|| PathBuf::from("mfsync-out"))
            .join(cmd.as_str()),
    };
    // The directory is not part of the result; keep manifests comparable.
    config.run.out = None;
    Ok((config, out))
}

/// Runs one subcommand and writes every artifact into `out`.
pub fn run(cmd: Subcommand, config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    std::fs::create_dir_all(out)?;
    output::write_manifest(&out.join("manifest.txt"), cmd.as_str(), &print_config(config))?;
    commands::dispatch(cmd, config, out)
}
