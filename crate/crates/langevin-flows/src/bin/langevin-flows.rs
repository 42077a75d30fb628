//! Experiment runner CLI: `run <config.json>` executes one experiment and
//! writes CSV results plus a JSON summary; `list` prints the registry.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use langevin_flows::experiments::{registry, run_from_file};

#[derive(Parser)]
#[command(name = "langevin-flows", version, about = "Langevin discretization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the config document.
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the experiment registry.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for info in registry() {
                println!("{:<22} {}", info.name, info.description);
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out } => {
            match run_from_file(&config, seed, out.as_deref()) {
                Ok(output) => {
                    for check in &output.summary.checks {
                        let status = if check.pass { "pass" } else { "FAIL" };
                        println!(
                            "[{status}] {}: value {:.6e}, bound {:.6e}",
                            check.name, check.value, check.bound
                        );
                    }
                    for file in &output.files {
                        println!("wrote {}", file.display());
                    }
                    if output.summary.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("one or more checks failed");
                        ExitCode::FAILURE
                    }
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
