use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use relhartree::experiments::{exit_code_for, run, ExperimentConfig, ExperimentKind};
use relhartree::Error;

#[derive(Parser, Debug)]
#[command(name = "relhartree", version, about = "Semi-relativistic Hartree dynamics and mean-field diagnostics")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for CSV, JSON summary and config echo.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Working precision of the high-precision Laguerre arithmetic.
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid integration of the Hartree equation.
    Hartree {
        #[command(subcommand)]
        action: HartreeAction,
    },
    /// Laguerre projection coefficients.
    Laguerre {
        #[command(subcommand)]
        action: LaguerreAction,
    },
    /// Fluctuation dynamics diagnostics.
    Fluct {
        #[command(subcommand)]
        action: FluctAction,
    },
    /// Trace-distance rate against the particle number.
    RateScan(ConfigArg),
    /// Run whatever experiment the config file names.
    Run(ConfigArg),
}

#[derive(Subcommand, Debug)]
enum HartreeAction {
    Evolve(ConfigArg),
    CutoffScan(ConfigArg),
}

#[derive(Subcommand, Debug)]
enum LaguerreAction {
    Verify {
        /// Comma-separated particle numbers.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum FluctAction {
    Parity(ConfigArg),
    ErrorTerms(ConfigArg),
}

#[derive(Args, Debug)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

fn load(path: &PathBuf, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    let names_kind = text.lines().any(|l| l.trim_start().starts_with("experiment"));
    let config = match (kind, names_kind) {
        (Some(k), false) => ExperimentConfig::parse(&format!("experiment = {k}\n{text}"))?,
        _ => ExperimentConfig::parse(&text)?,
    };
    if let Some(k) = kind {
        if config.kind != k {
            return Err(Error::Config(format!("config names experiment `{}` but the command runs `{k}`", config.kind)));
        }
    }
    Ok(config)
}

fn build(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.command {
        Command::Hartree { action: HartreeAction::Evolve(a) } => load(&a.config, Some(ExperimentKind::HartreeEvolve))?,
        Command::Hartree { action: HartreeAction::CutoffScan(a) } => load(&a.config, Some(ExperimentKind::CutoffScan))?,
        Command::Fluct { action: FluctAction::Parity(a) } => load(&a.config, Some(ExperimentKind::Parity))?,
        Command::Fluct { action: FluctAction::ErrorTerms(a) } => load(&a.config, Some(ExperimentKind::ErrorTerms))?,
        Command::RateScan(a) => load(&a.config, Some(ExperimentKind::RateScan))?,
        Command::Run(a) => load(&a.config, None)?,
        Command::Laguerre { action: LaguerreAction::Verify { n_list, config } } => {
            let mut c = match config {
                Some(p) => load(p, Some(ExperimentKind::LaguerreVerify))?,
                None => ExperimentConfig::defaults(ExperimentKind::LaguerreVerify),
            };
            if let Some(ns) = n_list {
                c.n_list = ns.clone();
            }
            c
        }
    };
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(d) = &cli.out_dir {
        config.out_dir = d.clone();
    }
    if let Some(p) = cli.precision_bits {
        config.precision_bits = p;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = build(&cli).and_then(|c| run(&c));
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::UnknownExperiment(_) = e {
                let kinds: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                eprintln!("known experiments: {}\n", kinds.join(", "));
                let _ = Cli::command().print_help();
            }
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
