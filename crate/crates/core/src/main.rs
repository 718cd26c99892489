use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use triplet_qmc::cli::runner::{parse_t_grid, write_json, write_time_series};
use triplet_qmc::cli::{analyze_command, invert_command, oracle_command, parse_config, run_command};
use triplet_qmc::{Error, Result};

#[derive(Parser)]
#[command(name = "tqmc", version, about = "Laplace-domain triplet Monte Carlo for spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo replicas described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides runs.master_seed.
        #[arg(long, env = "TQMC_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "TQMC_WORKERS")]
        workers: Option<usize>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact reference values on the config's grid.
    Oracle {
        config: PathBuf,
        /// Time step of the propagation route (chains longer than 8 sites).
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit a results curve and invert it to the time domain.
    Invert {
        results: PathBuf,
        #[arg(long)]
        observable: String,
        /// `start:stop:count` or a comma-separated list.
        #[arg(long, default_value = "0:5:51")]
        t_grid: String,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Frequency and amplitude report for one observable.
    Analyze {
        results: PathBuf,
        #[arg(long)]
        observable: String,
    },
}

fn load(path: &PathBuf) -> Result<triplet_qmc::cli::RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, workers, output } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.runs.master_seed = seed;
            }
            if let Some(dir) = &output {
                cfg.output = dir.to_string_lossy().into_owned();
            }
            cfg.validate()?;
            let out = PathBuf::from(&cfg.output);
            let outcome = run_command(&cfg, workers.unwrap_or_else(default_workers), &out)?;
            eprintln!(
                "{} runs, {} observables x {} s-points written to {}",
                outcome.aggregate.n_runs,
                outcome.aggregate.observables.len(),
                outcome.aggregate.s_values.len(),
                out.display()
            );
        }
        Command::Oracle { config, dt, output } => {
            let mut cfg = load(&config)?;
            if let Some(dir) = &output {
                cfg.output = dir.to_string_lossy().into_owned();
            }
            let out = PathBuf::from(&cfg.output);
            oracle_command(&cfg, dt, &out)?;
            eprintln!("oracle values written to {}", out.display());
        }
        Command::Invert { results, observable, t_grid, output } => {
            let series = invert_command(&results, &observable, &parse_t_grid(&t_grid)?)?;
            match output {
                Some(path) => write_time_series(&mut fs::File::create(path)?, &series)?,
                None => write_time_series(&mut std::io::stdout().lock(), &series)?,
            }
        }
        Command::Analyze { results, observable } => {
            let report = analyze_command(&results, &observable)?;
            write_json(&mut std::io::stdout().lock(), &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            match e {
                Error::PopulationCap { .. } | Error::RunFailed { .. } => ExitCode::from(3),
                Error::InvalidConfig { .. } | Error::UnknownKeys(_) | Error::Parse(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
