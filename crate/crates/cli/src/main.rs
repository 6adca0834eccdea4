//! `qmeas`: solve, describe, measure, sample, confront and sweep from the
//! command line. Reports go to stdout as JSON (and into `--out` when given);
//! errors go to stderr as JSON with a stable code.

mod commands;
mod config;
mod error;
mod report;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use report::Artifacts;

#[derive(Parser)]
#[command(name = "qmeas", version, about = "Intrinsic, predicted and simulated-experimental descriptors of 1D quantum states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest bound states of the configured potential.
    Solve {
        /// Number of states.
        #[arg(long)]
        k: Option<String>,
    },
    /// Intrinsic descriptors of one eigenstate.
    Describe,
    /// Intrinsic and predicted descriptors through the measurement channel.
    Measure,
    /// Simulated recordings and their empirical quantifiers.
    Sample,
    /// Compare simulated recordings against theory; exits 4 when refuted.
    Confront {
        /// Compare against the intrinsic (`in`) or predicted (`pd`) descriptors.
        #[arg(long)]
        against: Option<String>,
    },
    /// Predicted oscillator descriptors against closed forms over channel widths.
    Sweep {
        /// Comma-separated channel widths.
        #[arg(long, allow_hyphen_values = true)]
        gammas: Option<String>,
    },
    /// Variance of the N-sample mean over repeated trials.
    Fallacy {
        /// Comma-separated ensemble sizes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        trials: Option<String>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    n_samples: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    grid_n: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    domain: Option<String>,
    /// natural | si
    #[arg(long, global = true)]
    units: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    tolerance_mean: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    tolerance_dev: Option<String>,
    /// Any config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &cli.common.overrides {
        let (k, v) = pair.split_once('=').ok_or_else(|| CliError::Config(format!("--set {pair:?}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v)?;
    }
    let c = &cli.common;
    let mut flags: Vec<(&str, &Option<String>)> = vec![
        ("gamma", &c.gamma),
        ("n_samples", &c.n_samples),
        ("seed", &c.seed),
        ("grid_n", &c.grid_n),
        ("domain", &c.domain),
        ("units", &c.units),
        ("out", &c.out),
        ("tolerance_mean", &c.tolerance_mean),
        ("tolerance_dev", &c.tolerance_dev),
    ];
    match &cli.command {
        Command::Solve { k } => flags.push(("k", k)),
        Command::Confront { against } => flags.push(("against", against)),
        Command::Sweep { gammas } => flags.push(("gammas", gammas)),
        Command::Fallacy { sizes, trials } => {
            flags.push(("sizes", sizes));
            flags.push(("trials", trials));
        }
        Command::Describe | Command::Measure | Command::Sample => {}
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<commands::Outcome, CliError> {
    let cfg = resolve_config(cli)?;
    let out = Artifacts::new(cfg.out.clone())?;
    match cli.command {
        Command::Solve { .. } => commands::solve(&cfg, &out),
        Command::Describe => commands::describe(&cfg, &out),
        Command::Measure => commands::measure(&cfg, &out),
        Command::Sample => commands::sample(&cfg, &out),
        Command::Confront { .. } => commands::confront_cmd(&cfg, &out),
        Command::Sweep { .. } => commands::sweep(&cfg, &out),
        Command::Fallacy { .. } => commands::fallacy(&cfg, &out),
    }
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.report).expect("reports serialize");
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run());
}
