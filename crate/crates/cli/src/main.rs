use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use densetn_cli::{run_path, Overrides};

#[derive(Parser)]
#[command(name = "densetn", version, about = "Two-site DMRG ground-state runs from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured model and write results.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Kernel threads (overrides `threads` in the config).
        #[arg(long)]
        threads: Option<usize>,
        /// Compare against exact diagonalization (small systems only).
        #[arg(long)]
        verify: bool,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, out, threads, verify } = Cli::parse().command;
    match run_path(&config, &Overrides { out, threads, verify }) {
        Ok(summary) => {
            println!("energy {:.16e}  sweeps {}  converged {}", summary.report.energy(), summary.report.sweeps_run, summary.report.converged);
            if let Some(d) = summary.verify_delta {
                println!("ed energy delta {d:.3e}");
            }
            println!("results in {}", summary.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("densetn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
