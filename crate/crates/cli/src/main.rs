use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use otm_cli::run::{self, TrainOutcome};
use otm_cli::{verify, CliError, RunConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "otm", version, about = "Learn optimal transport maps by min-max training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a map and write history, evaluation, models and a scatter plot.
    Train {
        config: PathBuf,
        /// Comma-separated training seeds; each run gets its own directory.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Concurrent runs for a seed sweep.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate saved models on fresh samples and print one CSV row.
    Eval {
        config: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Evaluation seed; defaults to the config's eval.seed plus one.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the oracle and gradient self-checks.
    Verify {
        /// Disable Adam's bias correction; some checks must then fail.
        #[arg(long)]
        fault_injection: bool,
    },
    /// Print the first samples of both distributions as CSV.
    Sample {
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
}

fn summarize(config: &RunConfig, outcome: &TrainOutcome) {
    let r = outcome.final_report();
    println!("{}: {} iterations -> {}", config.name, outcome.history.len(), outcome.dir.display());
    if let Some(uvp) = r.l2_uvp_percent {
        println!("  l2_uvp_percent          {uvp:.4}");
    }
    println!("  empirical_transport_cost {:.6}", r.empirical_transport_cost);
    println!("  frechet_gaussian        {:.6}", r.frechet_gaussian);
    if let Some(ratio) = outcome.w2_ratio() {
        let verdict = if ratio < config.eval.w2_ratio_threshold { "below" } else { "above" };
        println!("  w2 pushforward/input    {ratio:.4} ({verdict} threshold {})", config.eval.w2_ratio_threshold);
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { config, seeds, jobs } => {
            let config = RunConfig::load(&config)?;
            if seeds.is_empty() {
                let outcome = run::run_train(&config)?;
                summarize(&config, &outcome);
                return Ok(());
            }
            let mut first_error = None;
            for (seed, result) in run::run_sweep(&config, &seeds, jobs) {
                match result {
                    Ok(outcome) => summarize(&config, &outcome),
                    Err(e) => {
                        eprintln!("seed {seed}: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            first_error.map_or(Ok(()), Err)
        }
        Command::Eval { config, models, seed } => {
            let config = RunConfig::load(&config)?;
            let seed = seed.unwrap_or(config.eval.seed + 1);
            let report = run::run_eval(&config, &models, seed)?;
            print!("{}", run::eval_csv(&[report]));
            Ok(())
        }
        Command::Verify { fault_injection } => {
            let report = verify::run_verify(fault_injection);
            print!("{}", report.table());
            match report.failed() {
                0 => Ok(()),
                failed => Err(CliError::Verification { failed, total: report.checks.len() }),
            }
        }
        Command::Sample { config, n } => {
            let config = RunConfig::load(&config)?;
            print!("{}", run::run_sample(&config, n)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
