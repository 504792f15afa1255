use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gcp_hydro::experiment::{self, ExperimentConfig, ExperimentKind, ENV_WORKERS};
use gcp_hydro::Error;

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_OTHER: u8 = 3;

#[derive(Parser)]
#[command(name = "gcp-hydro", version, about = "Generalized contact process: simulation and hydrodynamic checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (also reachable as `gcp-hydro <experiment> ...`).
    Run(RunArgs),
    /// Check a config file and report every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the stock TOML config of an experiment.
    Defaults { experiment: String },
    /// List experiment names.
    List,
    /// Experiment names used directly as the subcommand.
    #[command(external_subcommand)]
    Experiment(Vec<String>),
    /// Convert a wide CSV into long format.
    Melt {
        input: PathBuf,
        /// Columns kept as identifiers.
        #[arg(long = "id", required = true)]
        ids: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment name; may be omitted when the config file names one.
    experiment: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set replicas=200` or `--set kernel.beta=1.0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Parser)]
#[command(name = "gcp-hydro")]
struct DirectRun {
    #[command(flatten)]
    args: RunArgs,
}

fn parse_kind(name: &str) -> Result<ExperimentKind, Error> {
    ExperimentKind::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        Error::Config {
            field: "experiment".into(),
            message: format!("unknown experiment `{name}`; known: {}", known.join(", ")),
        }
    })
}

fn configure_workers() -> Result<(), Error> {
    let Ok(raw) = std::env::var(ENV_WORKERS) else { return Ok(()) };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config {
        field: ENV_WORKERS.into(),
        message: format!("expected a positive integer, got `{raw}`"),
    })?;
    // a pool already set up by an earlier call is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run_experiment(RunArgs { experiment, config, overrides, out }: RunArgs) -> Result<u8, Error> {
    configure_workers()?;
    let kind = experiment.as_deref().map(parse_kind).transpose()?;
    let mut cfg = ExperimentConfig::load(config.as_deref(), kind, &overrides)?;
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    let started = Instant::now();
    let outcome = experiment::run(&cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    let written = experiment::write_outcome(&outcome, &cfg, &cfg.out_dir, elapsed)?;
    for check in &outcome.checks {
        let tag = if check.pass { "PASS" } else { "FAIL" };
        println!("{tag}  {}: {:.6e} (target {})", check.name, check.value, check.target);
    }
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    Ok(if outcome.pass() { 0 } else { EXIT_FAIL })
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run(args) => run_experiment(args),
        Command::Experiment(argv) => {
            let name = argv.first().cloned().unwrap_or_default();
            parse_kind(&name)?;
            let parsed = DirectRun::try_parse_from(std::iter::once("gcp-hydro".to_string()).chain(argv))
                .unwrap_or_else(|e| e.exit());
            run_experiment(parsed.args)
        }

        Command::Validate { config, overrides } => {
            let cfg = ExperimentConfig::load(Some(&config), None, &overrides)?;
            let violations = cfg.validate();
            if violations.is_empty() {
                println!("{}: ok ({})", config.display(), cfg.experiment.name());
                Ok(0)
            } else {
                for v in &violations {
                    eprintln!("{v}");
                }
                Ok(EXIT_CONFIG)
            }
        }
        Command::Defaults { experiment } => {
            let kind = parse_kind(&experiment)?;
            print!("{}", ExperimentConfig::default_for(kind).to_toml_string()?);
            Ok(0)
        }
        Command::List => {
            for k in ExperimentKind::ALL {
                println!("{}", k.name());
            }
            Ok(0)
        }
        Command::Melt { input, ids, out } => {
            let table = experiment::melt(&input, &ids)?;
            let dest = out.unwrap_or_else(|| input.with_file_name(&table.file));
            experiment::write_atomic(&dest, &table.to_bytes()?)?;
            eprintln!("wrote {}", dest.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_OTHER)
        }
    }
}
