use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotodyn_cli::commands::{self, Context};
use rotodyn_cli::config::parse_config;
use rotodyn_cli::CliError;

/// Rotational dynamics of asymmetric-top molecules in combined DC and laser fields.
#[derive(Debug, Parser)]
#[command(name = "rotodyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Configuration file.
    #[arg(short, long)]
    config: PathBuf,

    /// Output directory.
    #[arg(short, long, default_value = "out")]
    output: PathBuf,

    /// Override a configuration key, e.g. `pulse.tau_ns=5`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Adiabatic energies over an intensity grid, with gap minima.
    Spectrum(Common),
    /// Propagate one initial state through the pulse.
    Propagate {
        #[command(flatten)]
        common: Common,
        /// Also write the per-step Krylov order and error estimate.
        #[arg(long)]
        step_log: bool,
    },
    /// Independent propagations over lists of pulse lengths and DC fields.
    Sweep(Common),
    /// Gap minima and maximal adiabaticity parameters over the pulse.
    Crossings(Common),
    /// Parse and check a configuration without computing anything.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads;
    let ctx = |c: &Common, step_log| Context {
        out_dir: c.output.clone(),
        threads: if threads == 0 {
            rayon::current_num_threads()
        } else {
            threads
        },
        step_log,
    };
    let warnings = match &cli.command {
        Command::Validate { config, overrides } => {
            let file = parse_config(config, overrides)?;
            let report = commands::validate(&file)?;
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{report}");
            return Ok(());
        }
        Command::Spectrum(c) => {
            commands::spectrum(&parse_config(&c.config, &c.overrides)?, &ctx(c, false))?
        }
        Command::Propagate { common, step_log } => commands::propagate(
            &parse_config(&common.config, &common.overrides)?,
            &ctx(common, *step_log),
        )?,
        Command::Sweep(c) => {
            commands::sweep(&parse_config(&c.config, &c.overrides)?, &ctx(c, false))?
        }
        Command::Crossings(c) => {
            commands::crossings(&parse_config(&c.config, &c.overrides)?, &ctx(c, false))?
        }
    };
    if !warnings.is_empty() {
        eprintln!(
            "finished with {} warning(s); see metadata.json",
            warnings.len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
