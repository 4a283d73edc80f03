use std::path::PathBuf;
use std::process::ExitCode;

use bvi::config::{ExperimentConfig, ExperimentKind};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bvi", version, about = "Run Bregman proximal variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Print a ready-to-run config for an experiment.
    Demo {
        #[arg(value_parser = ["gaussian_sweep", "sensitivity", "regression", "single_run"])]
        experiment: String,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run { config, jobs, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            let results = bvi::run_experiment(&cfg, &dir, jobs)?;
            let diverged = results.iter().filter(|r| r.status == "diverged").count();
            let failed = results.iter().filter(|r| r.status == "error").count();
            eprintln!(
                "{} replicates written to {} ({diverged} diverged, {failed} failed)",
                results.len(),
                dir.display()
            );
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::Demo { experiment } => {
            let kind = ExperimentKind::from_name(&experiment).expect("restricted by the parser");
            print!("{}", bvi::demo::demo_json(kind));
        }
    }
    Ok(())
}
