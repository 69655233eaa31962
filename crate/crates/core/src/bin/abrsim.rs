use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use abrsim::experiment::{
    emit_plot_data, exit, run_matrix, validate_fig3, write_validation, ExperimentConfig,
    ValidateConfig,
};

#[derive(Parser)]
#[command(name = "abrsim", version, about = "Trace-driven adaptive streaming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix and write a result bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the square-wave validation scenario.
    Validate {
        #[arg(long)]
        out: PathBuf,
        /// Optional TOML overriding the scenario defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write per-metric plot tables for an existing bundle.
    Plot {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out } => {
            let result = ExperimentConfig::load(&config).and_then(|cfg| run_matrix(&cfg, &out));
            match result {
                Ok(outcome) => {
                    let s = &outcome.summary;
                    println!(
                        "{} sessions, {} cells, {} flagged, {} failed",
                        s.sessions, s.cells, s.flagged, s.failed
                    );
                    code(if outcome.has_flagged() { exit::FLAGGED } else { exit::SUCCESS })
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(exit::STRUCTURAL)
                }
            }
        }
        Command::Validate { out, config } => {
            let cfg = match config {
                Some(path) => match std::fs::read_to_string(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|t| toml::from_str::<ValidateConfig>(&t).map_err(|e| e.to_string()))
                {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("error: {}: {e}", path.display());
                        return code(exit::STRUCTURAL);
                    }
                },
                None => ValidateConfig::default(),
            };
            let v = match validate_fig3(&cfg).and_then(|v| write_validation(&out, &v).map(|_| v)) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(exit::STRUCTURAL);
                }
            };
            for c in &v.report.checks {
                println!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.id, c.description, c.detail);
            }
            code(if v.report.passed { exit::SUCCESS } else { exit::FLAGGED })
        }
        Command::Plot { bundle } => match emit_plot_data(&bundle) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                code(exit::SUCCESS)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit::STRUCTURAL)
            }
        },
    }
}
