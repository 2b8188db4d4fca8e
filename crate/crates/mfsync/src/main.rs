use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mfsync::{parse_config, resolve, run, CliError, ConfigError, Overrides, Subcommand, OUT_DIR_ENV};

/// Mean-field oscillator game experiments.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    subcommand: Subcommand,
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `$MFSYNC_OUT_DIR/<subcommand>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV, hide_env_values = true)]
    out_root: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((dir, summary)) => {
            println!("{}: {summary}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<(PathBuf, String), CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", p.display()),
        })?,
        None => String::new(),
    };
    let config = parse_config(&text)?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        out_root: cli.out_root.clone(),
    };
    let (config, dir) = resolve(cli.subcommand, config, &overrides)?;
    let summary = run(cli.subcommand, &config, &dir)?;
    Ok((dir, summary))
}
