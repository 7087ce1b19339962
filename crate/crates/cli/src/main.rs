use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use overtake_cli::{parse_list, run_command, sweep_command, validate_command, CliError};

#[derive(Parser)]
#[command(name = "race", version, about = "GP-SMPC overtaking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the scenario once per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds; defaults to the config's seed list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a parameter over a list of values and seeds `0..n`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and validate a config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            seeds,
            out,
            jobs,
        } => {
            let seeds = seeds
                .as_deref()
                .map(|s| parse_list::<u64>(s, "seed"))
                .transpose()?;
            let summary = run_command(&config, seeds.as_deref(), &out, jobs)?;
            let a = &summary.aggregate;
            println!(
                "{} runs, success rate {:.3}, collisions {}, mean min_gap {:.4} m, infeasible cycles {}",
                a.runs, a.success_rate, a.collisions, a.mean_min_gap, a.infeasible_cycles_total
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            seeds,
            out,
            jobs,
        } => {
            let values = parse_list::<f64>(&values, "value")?;
            let rows = sweep_command(&config, &param, &values, seeds, &out, jobs)?;
            println!(
                "{} runs written to {}",
                rows.len(),
                out.join("sweep.csv").display()
            );
        }
        Command::Validate { config } => {
            let hash = validate_command(&config)?;
            println!("ok {hash}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("race: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
