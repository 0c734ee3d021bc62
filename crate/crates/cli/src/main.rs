use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urnwalk_cli::config::{load_config, RunConfig};
use urnwalk_cli::error::{CliError, CliResult, EXIT_CONFIG, EXIT_OK};
use urnwalk_cli::runner;
use urnwalk_cli::validate::{validate_text, Level};

#[derive(Parser)]
#[command(name = "urnwalk", version, about = "Urns with random walk offsets and their tree representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an `urn` or `tree` experiment.
    Simulate(RunArgs),
    /// Empirical moments against closed forms.
    Moments(RunArgs),
    /// KS distances of rescaled label laws against the Gaussian limit.
    Normality(RunArgs),
    /// Branch fractions of recursive trees.
    Gem(RunArgs),
    /// Continuous-time embedding against the discrete tree.
    Coupling(RunArgs),
    /// Influence of the initial composition.
    Drift(RunArgs),
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; falls back to the config `out`, then `urnwalk-out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn accepts(command: &Command, experiment: &str) -> bool {
    match command {
        Command::Simulate(_) => matches!(experiment, "urn" | "tree"),
        Command::Moments(_) => experiment == "moments",
        Command::Normality(_) => experiment == "normality",
        Command::Gem(_) => experiment == "gem",
        Command::Coupling(_) => experiment == "coupling",
        Command::Drift(_) => experiment == "initial_drift",
        Command::Validate { .. } => true,
    }
}

fn prepare(command: &Command, args: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = load_config(&args.config)?;
    if !accepts(command, cfg.experiment.name()) {
        return Err(CliError::Config(format!("this subcommand cannot run a {} experiment", cfg.experiment.name())));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    urnwalk_cli::config::check(&cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Validate { config } => match std::fs::read_to_string(config) {
            Ok(text) => {
                for d in validate_text(&text) {
                    match d.level {
                        Level::Info => println!("{d}"),
                        _ => eprintln!("{d}"),
                    }
                }
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {}: {e}", config.display());
                EXIT_CONFIG
            }
        },
        Command::Simulate(a)
        | Command::Moments(a)
        | Command::Normality(a)
        | Command::Gem(a)
        | Command::Coupling(a)
        | Command::Drift(a) => match prepare(&cli.command, a).and_then(|cfg| {
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("urnwalk-out"));
            runner::run(&cfg, &out)
        }) {
            Ok(outcome) => {
                println!("wrote {} rows to {}", outcome.rows.len(), outcome.out_dir.display());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
