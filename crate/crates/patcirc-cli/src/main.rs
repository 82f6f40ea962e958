use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patcirc_cli::config::ExperimentConfig;
use patcirc_cli::io::Metric;
use patcirc_cli::{run, CliError};

#[derive(Parser)]
#[command(name = "patcirc", version, about = "Photoacoustic circular-detector experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config with dotted keys; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Do not print metric rows.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample the phantom on its grid.
    Phantom,
    /// Simulate detector data into sinogram.rvl.
    Forward,
    /// Reconstruct from sinogram.rvl in the output directory.
    Invert,
    /// Forward then invert.
    Pipeline,
    /// Run the small oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(rows) => {
            if !cli.quiet {
                for r in rows {
                    println!("{},{},{:e},{},{:.1}", r.stage, r.name, r.value, r.units, r.wall_ms);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("patcirc: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<Metric>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Phantom => run::cmd_phantom(&cfg, &out),
        Command::Forward => run::cmd_forward(&cfg, &out),
        Command::Invert => run::cmd_invert(&cfg, &out),
        Command::Pipeline => run::cmd_pipeline(&cfg, &out),
        Command::Selftest => run::cmd_selftest(&cfg, &out),
    }
}
